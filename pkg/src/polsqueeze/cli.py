"""Command-line front end.

Subcommands: sweep, single, fit-gawbs, compare, oracle.  Flags override
config-file keys.  Exit codes: 0 success, 1 partial failure, 2 config error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError


def _add_common_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", "-c", default=None, help="JSON config file")
    p.add_argument("--threads", type=int, default=1,
                   help="worker processes for trajectory blocks")
    p.add_argument("--trajectories", type=int, default=None)
    p.add_argument("--reference-trajectories", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--scheme", choices=("strang", "strang4"), default=None)
    p.add_argument("--grid-points", type=int, default=None)
    p.add_argument("--eta", type=float, default=None,
                   help="detection transmittance override")
    p.add_argument("--gawbs", type=float, default=None,
                   help="GAWBS coefficient (rad^2/J) override")
    p.add_argument("--raman-fraction", type=float, default=None)
    p.add_argument("--no-raman", action="store_true",
                   help="disable the Raman term entirely")
    p.add_argument("--out", "-o", default=None, help="output directory")


def _overrides_from_args(args) -> dict:
    ov = {}
    if getattr(args, "energies_pj", None):
        ov["sweep.energies_pj"] = [float(x) for x in args.energies_pj.split(",")]
    if args.trajectories is not None:
        ov["ensemble.n_trajectories"] = args.trajectories
    if args.reference_trajectories is not None:
        ov["ensemble.reference_trajectories"] = args.reference_trajectories
    if args.steps is not None:
        ov["stepper.n_steps"] = args.steps
    if args.scheme is not None:
        ov["stepper.scheme"] = args.scheme
    if args.grid_points is not None:
        ov["grid.n_points"] = args.grid_points
    if args.eta is not None:
        ov["detection.transmittance"] = args.eta
    if args.gawbs is not None:
        ov["detection.gawbs_coefficient_rad2_per_j"] = args.gawbs
    if args.raman_fraction is not None:
        ov["raman.fraction"] = args.raman_fraction
    if args.no_raman:
        ov["raman.enabled"] = False
    if args.out is not None:
        ov["sweep.output_dir"] = args.out
    return ov


def _load(args, extra_overrides=None):
    from .config import load_config

    ov = _overrides_from_args(args)
    if extra_overrides:
        ov.update(extra_overrides)
    return load_config(args.config, ov)


def _cmd_sweep(args) -> int:
    from .sweep import run_sweep

    cfg = _load(args)

    def progress(row):
        print(row.summary_line(), flush=True)

    print("energy_pJ,squeezing_dB,antisqueezing_dB,theta_sq_deg,sampling_err_dB",
          flush=True)
    rows, manifest = run_sweep(cfg, args.seed, threads=args.threads,
                               progress=progress)
    print(f"outputs written to {Path(cfg.output_dir).resolve()}")
    return 1 if any(r.failed for r in rows) else 0


def _cmd_single(args) -> int:
    from .sweep import measure_energy

    cfg = _load(args, {"sweep.energies_pj": [args.energy_pj]})
    row = measure_energy(cfg, args.energy_pj * 1e-12, args.seed, 0,
                         threads=args.threads)
    r = row.result
    print(f"energy        : {args.energy_pj:.1f} pJ")
    print(f"squeezing     : {r.squeezing_db:.3f} dB")
    print(f"antisqueezing : {r.antisqueezing_db:.3f} dB")
    print(f"theta_sq      : {r.theta_sq_deg:.3f} deg")
    print(f"sampling err  : {r.sampling_error_db:.3f} dB")
    print(f"uncertainty product V(th) V(th+90) = {r.uncertainty_product():.4f}")
    if row.lossless is not r:
        print(f"lossless squeezing : {row.lossless.squeezing_db:.3f} dB")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        r.write_curve_csv(out / f"vtheta_{args.energy_pj:.1f}pJ.csv")
        print(f"V(theta) curve written to {out}")
    return 0


def _cmd_fit_gawbs(args) -> int:
    from .sweep import fit_gawbs_to_angles, load_measured_csv

    cfg = _load(args)
    if args.angles:
        pts = [(m.energy, m.theta_deg) for m in load_measured_csv(args.angles)]
    else:
        # single published point fallback
        pts = [(98.6e-12, 1.71)]
        pts = pts * 3  # golden-section needs >= 3 residual terms
    fit = fit_gawbs_to_angles(cfg, args.seed, pts, threads=args.threads,
                              g_max=args.g_max)
    print(f"gawbs_coefficient_rad2_per_j = {fit.coefficient:.6g}")
    print(f"rss_deg2 = {fit.rss:.6g}  iterations = {fit.iterations}")
    for (e, th), res in zip(pts, fit.residuals_deg):
        print(f"  {e * 1e12:7.1f} pJ  measured {th:6.2f} deg  residual {res:+.3f} deg")
    return 0


def _cmd_compare(args) -> int:
    from .sweep import (ComparisonReport, SweepRow, compare_to_measurement,
                        load_measured_csv)
    from .polarimetry import SqueezingResult

    measured = load_measured_csv(args.measured)

    rows = []
    with open(args.summary, "r", encoding="utf-8") as f:
        f.readline()
        for line in f:
            parts = line.strip().split(",")
            if len(parts) < 5 or parts[1] == "failed":
                continue
            e_pj, sq, asq, th, err = (float(p) for p in parts[:5])
            v_min = 10.0 ** (sq / 10.0)
            res = SqueezingResult(
                theta_grid=np.array([0.0]), variance_snl=np.array([1.0]),
                v_min=v_min, v_max=10.0 ** (asq / 10.0), theta_sq_deg=th,
                err_v_min=err * v_min / (10.0 / np.log(10.0)),
                err_v_max=0.0, shot_noise_reference=1.0,
                n_trajectories=0, low_confidence=False)
            rows.append(SweepRow(energy=e_pj * 1e-12, result=res, lossless=res,
                                 shot_noise=1.0, n_aborted=0,
                                 wall_reference_s=0.0, wall_signal_s=0.0))

    report: ComparisonReport = compare_to_measurement(rows, measured)
    print("energy_pJ  res_sq_dB  res_antisq_dB  res_theta_deg  flagged")
    for p in report.points:
        print(f"{p.energy * 1e12:9.1f}  {p.residual_squeezing_db:+9.3f}  "
              f"{p.residual_antisqueezing_db:+13.3f}  "
              f"{p.residual_theta_deg:+13.3f}  {int(p.outside_error_bars)}")
    print(f"RMS: squeezing {report.rms_squeezing_db:.3f} dB, "
          f"antisqueezing {report.rms_antisqueezing_db:.3f} dB, "
          f"angle {report.rms_theta_deg:.3f} deg")
    if report.skipped_energies:
        print(f"skipped (out of range): "
              f"{[round(e * 1e12, 1) for e in report.skipped_energies]} pJ")
    if args.out:
        report.write_csv(args.out)
        print(f"residuals written to {args.out}")
    return 0


def _cmd_oracle(args) -> int:
    from .kerr_oracle import fock_kerr_variance, twa_kerr_variance

    exact = fock_kerr_variance(args.alpha_sq, args.total_phase)
    twa = twa_kerr_variance(args.alpha_sq, args.total_phase, args.samples,
                            seed=args.seed)
    diff_db = 10.0 * (np.log10(twa.v_min) - np.log10(exact.v_min))
    print(f"alpha^2 = {args.alpha_sq}, total Kerr phase = {args.total_phase} rad")
    print(f"exact  : V_min = {exact.v_min:.6f}  V_max = {exact.v_max:.6f}")
    print(f"wigner : V_min = {twa.v_min:.6f}  V_max = {twa.v_max:.6f} "
          f"({args.samples} samples)")
    print(f"V_min difference = {diff_db:+.4f} dB")
    return 0 if abs(diff_db) < 0.1 else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="polsqueeze",
        description="Polarization-squeezing fiber simulator and measurement harness",
    )
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("sweep", help="run the pulse-energy sweep")
    _add_common_overrides(ps)
    ps.add_argument("--seed", type=int, required=True,
                    help="master seed (mandatory for reproducibility)")
    ps.add_argument("--energies-pj", default=None,
                    help="comma-separated energies in pJ")
    ps.set_defaults(fn=_cmd_sweep)

    pg = sub.add_parser("single", help="one energy point")
    _add_common_overrides(pg)
    pg.add_argument("--seed", type=int, required=True)
    pg.add_argument("--energy-pj", type=float, required=True)
    pg.set_defaults(fn=_cmd_single)

    pf = sub.add_parser("fit-gawbs", help="fit the GAWBS coefficient to angles")
    _add_common_overrides(pf)
    pf.add_argument("--seed", type=int, required=True)
    pf.add_argument("--angles", default=None,
                    help="CSV with energy_pJ,theta_deg (default: published point)")
    pf.add_argument("--g-max", type=float, default=1e6)
    pf.set_defaults(fn=_cmd_fit_gawbs)

    pc = sub.add_parser("compare", help="residuals against measured data")
    pc.add_argument("--summary", required=True, help="sweep summary.csv")
    pc.add_argument("--measured", required=True, help="measured-points CSV")
    pc.add_argument("--out", default=None, help="residual CSV output path")
    pc.set_defaults(fn=_cmd_compare)

    po = sub.add_parser("oracle", help="single-mode Kerr oracle cross-check")
    po.add_argument("--alpha-sq", type=float, default=10.0)
    po.add_argument("--total-phase", type=float, default=0.1)
    po.add_argument("--samples", type=int, default=2_000_000)
    po.add_argument("--seed", type=int, default=1)
    po.set_defaults(fn=_cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
