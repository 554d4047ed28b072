"""Command-line interface.

Exit codes: 0 on success, 1 on usage or input errors, 2 on fit failures.
Every fitting or experiment command requires an explicit seed so reruns
are reproducible.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import io as mio
from .fit_mf import MfFitConfig, fit_mfglam
from .fit_single import CandidateGrid, FittingError, fit_glam
from .likelihood import Dataset
from .metrics import ReferenceSet, normalized_ws_error
from .model import load_model, save_model, serialize
from .optim import OptimConfig
from .seeding import derive_rng
from .simulators import (
    ExperimentPlan,
    borehole_hf_batch,
    borehole_hf_input_model,
    borehole_lf_batch,
    borehole_lf_input_model,
    run_experiment,
    synthetic_input_model,
    synthetic_pair,
)

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    # usage problems exit 1 (argparse defaults to 2, which is reserved for
    # fit failures here)
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_fit_common(p):
    p.add_argument("--input-model", required=True, help="input model config file")
    p.add_argument("--seed", type=int, required=True, help="master seed (mandatory)")
    p.add_argument("--out-model", default="model.json")
    p.add_argument("--out-report", default="report.json")
    p.add_argument(
        "--grid",
        choices=["auto", "default", "reduced", "constant"],
        default="auto",
        help="candidate basis grid; auto picks by sample size",
    )
    p.add_argument("--tr-max-iter", type=int, default=500)
    p.add_argument("--cma-budget", type=int, default=5000)


def _grid_from_args(args, n: int) -> CandidateGrid:
    if args.grid == "default":
        return CandidateGrid.default()
    if args.grid == "reduced":
        return CandidateGrid.reduced_small_n()
    if args.grid == "constant":
        return CandidateGrid.constant_only()
    return CandidateGrid.for_size(n)


def _optim_from_args(args) -> OptimConfig:
    return OptimConfig(tr_max_iter=args.tr_max_iter, cma_budget=args.cma_budget)


def _write_json(path, payload) -> None:
    mio.atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _cmd_fit_glam(args) -> int:
    input_model = mio.load_input_model(args.input_model)
    X, y = mio.read_dataset_csv(args.dataset, input_model)
    data = Dataset(X, y, "HF")
    model, report = fit_glam(
        data, input_model, _grid_from_args(args, data.n), _optim_from_args(args), seed=args.seed
    )
    save_model(model, args.out_model)
    _write_json(args.out_report, report.to_dict())
    print(f"fitted GLaM on {data.n} samples: loglik={report.loglik:.6g} bic={report.bic:.6g}")
    return 0


def _cmd_fit_mfglam(args) -> int:
    input_model = mio.load_input_model(args.input_model)
    if args.lf_columns:
        cols = tuple(int(c) for c in args.lf_columns.split(","))
    else:
        cols = tuple(range(input_model.dim))
    x_hf, y_hf = mio.read_dataset_csv(args.hf_dataset, input_model)
    lf_input = input_model.subset(cols)
    x_lf, y_lf = mio.read_dataset_csv(args.lf_dataset, lf_input)
    config = MfFitConfig(p=args.p, lf_columns=cols)
    model, report = fit_mfglam(
        Dataset(x_hf, y_hf, "HF"),
        Dataset(x_lf, y_lf, "LF"),
        input_model,
        config,
        _optim_from_args(args),
        seed=args.seed,
    )
    save_model(model, args.out_model)
    _write_json(args.out_report, report.to_dict())
    print(
        f"fitted MF-GLaM on {len(y_hf)} HF + {len(y_lf)} LF samples: "
        f"loglik={report.loglik:.6g} mf_bic={report.mf_bic:.6g}"
    )
    return 0


def _cmd_predict(args) -> int:
    model = load_model(args.model)
    points = mio.read_points_csv(args.points, model.input)
    names = list(model.input.names)
    mode = sum(bool(v) for v in (args.quantiles, args.pdf_grid, args.moments))
    if mode != 1:
        raise ValueError("choose exactly one of --quantiles, --pdf-grid, --moments")

    if args.quantiles:
        levels = [float(tok) for tok in args.quantiles.split(",")]
        if any(not 0.0 <= lv <= 1.0 for lv in levels):
            raise ValueError("quantile levels must lie in [0, 1]")
        header = names + [f"q_{lv:g}" for lv in levels]
        rows = []
        if points.shape[0]:
            q = model.predict_quantiles(points, levels)
            rows = [list(points[i]) + list(q[i]) for i in range(points.shape[0])]
        mio.write_table_csv(args.out, header, rows)
    elif args.moments:
        header = names + ["mean", "variance"]
        rows = []
        if points.shape[0]:
            m, v = model.predict_moments(points)
            rows = [list(points[i]) + [m[i], v[i]] for i in range(points.shape[0])]
        mio.write_table_csv(args.out, header, rows)
    else:
        header = names + ["y", "pdf"]
        rows = []
        spec = args.pdf_grid
        if spec.startswith("auto:"):
            count = int(spec.split(":", 1)[1])
            grids = None
        else:
            parts = spec.split(":")
            if len(parts) != 3:
                raise ValueError("--pdf-grid expects LO:HI:COUNT or auto:COUNT")
            lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
            grids = np.linspace(lo, hi, count)
        if count < 2:
            raise ValueError("--pdf-grid needs at least two grid points")
        for i in range(points.shape[0]):
            if grids is None:
                span = model.predict_quantiles(points[i][None, :], [1e-4, 1.0 - 1e-4])[0]
                grid = np.linspace(span[0], span[1], count)
            else:
                grid = grids
            dens = model.predict_pdf(points[i][None, :], grid)[0]
            rows.extend(list(points[i]) + [grid[j], dens[j]] for j in range(len(grid)))
        mio.write_table_csv(args.out, header, rows)
    print(f"wrote {args.out}")
    return 0


_SIMULATORS = {
    "synthetic-hf": (synthetic_input_model, lambda X, rng: synthetic_pair().hf.sample_at(X, rng)),
    "synthetic-lf": (synthetic_input_model, lambda X, rng: synthetic_pair().lf.sample_at(X, rng)),
    "borehole-hf": (borehole_hf_input_model, borehole_hf_batch),
    "borehole-lf": (borehole_lf_input_model, borehole_lf_batch),
}


def _cmd_simulate(args) -> int:
    input_model_fn, sampler = _SIMULATORS[args.which]
    im = input_model_fn()
    rng_design = derive_rng(args.seed, "design")
    X = im.lhs_sample(args.n, rng_design) if args.design == "lhs" else im.mc_sample(args.n, rng_design)
    y = sampler(X, derive_rng(args.seed, "response"))
    mio.write_dataset_csv(args.out, im.names, X, y)
    print(f"wrote {args.n} rows to {args.out}")
    return 0


def _cmd_validate(args) -> int:
    model = load_model(args.model)
    if bool(args.reference_model) == bool(args.reference_samples):
        raise ValueError("provide exactly one of --reference-model and --reference-samples")
    if args.reference_model:
        if not args.test:
            raise ValueError("--reference-model requires --test points")
        ref_model = load_model(args.reference_model)
        x_test = mio.read_points_csv(args.test, model.input)
        l1, l2, l3, l4 = ref_model.lambda_fields(x_test)
        reference = ReferenceSet(x_test, gld_params=np.column_stack([l1, l2, l3, l4]))
    else:
        names = list(model.input.names)
        header, data = mio._read_csv_rows(args.reference_samples, names)
        rep_cols = [j for j, h in enumerate(header) if h not in names]
        if not rep_cols:
            raise ValueError("reference sample file has no replication columns")
        x_cols = [header.index(n) for n in names]
        reference = ReferenceSet(data[:, x_cols], samples=data[:, rep_cols])
    report = normalized_ws_error(model, reference)
    _write_json(args.out, report.to_dict())
    print(f"eps_w={report.eps_w:.6g} nmse_mean={report.nmse_mean:.6g} nmse_var={report.nmse_var:.6g}")
    return 0


def _plan_from_config(pairs: dict) -> ExperimentPlan:
    if "seed" not in pairs:
        raise ValueError("experiment plan must declare a seed")
    def get(key, default, cast):
        return cast(pairs[key]) if key in pairs else default

    nh = tuple(int(t) for t in pairs.get("nh", "100,200,400,800").split(","))
    return ExperimentPlan(
        example=pairs.get("example", "synthetic"),
        nh_values=nh,
        n_lf=get("nl", 1000, int),
        repetitions=get("repetitions", 25, int),
        test_size=get("test_size", 1000, int),
        replications=get("replications", 250, int),
        seed=int(pairs["seed"]),
        p=get("p", 0.5, float),
        workers=get("workers", 1, int),
    )


def _cmd_experiment(args) -> int:
    with open(args.plan, "r", encoding="utf-8") as fh:
        plan = _plan_from_config(mio.parse_flat_config(fh.read()))
    if args.workers is not None:
        plan = ExperimentPlan(**{**plan.__dict__, "workers": args.workers})
    report = run_experiment(plan)
    out = args.out
    os.makedirs(out, exist_ok=True)
    payload = report.to_dict()
    rows = payload.pop("rows")
    _write_json(os.path.join(out, "summary.json"), payload)
    header = ["example", "n_hf", "repetition", "model", "eps_w", "nmse_mean", "nmse_var", "wall_time", "seed"]
    mio.write_table_csv(
        os.path.join(out, "cells.csv"), header, [[r[k] for k in header] for r in rows]
    )
    for line in report.summary():
        print(
            f"{line['example']} n_hf={line['n_hf']:>4} {line['model']:<2} "
            f"median eps_w={line['median_eps_w']:.4g} (iqr {line['iqr_eps_w']:.3g}, n={line['n_runs']})"
        )
    if report.failures:
        print(f"{len(report.failures)} cell(s) failed; see summary.json")
    return 0


def _cmd_defaults(args) -> int:
    grid = CandidateGrid.default()
    reduced = CandidateGrid.reduced_small_n()
    mf = MfFitConfig()
    opt = OptimConfig()
    plan = ExperimentPlan(seed=0)
    lines = {
        "grid.l1_degrees": grid.l1_degrees,
        "grid.l1_qnorms": grid.l1_qnorms,
        "grid.l2_degrees": grid.l2_degrees,
        "grid.l2_qnorms": grid.l2_qnorms,
        "grid.l3_degrees": grid.l3_degrees,
        "grid.l3_qnorms": grid.l3_qnorms,
        "grid.l4_degrees": grid.l4_degrees,
        "grid.l4_qnorms": grid.l4_qnorms,
        "grid.small_n_threshold": 150,
        "grid_reduced.l1_degrees": reduced.l1_degrees,
        "grid_reduced.l2_degrees": reduced.l2_degrees,
        "grid_reduced.l3_degrees": reduced.l3_degrees,
        "mf.p": mf.p,
        "mf.delta1_degrees": mf.delta1_degrees,
        "mf.delta1_qnorms": mf.delta1_qnorms,
        "mf.delta2_degrees": mf.delta2_degrees,
        "mf.delta2_qnorms": mf.delta2_qnorms,
        "optim.tr_max_iter": opt.tr_max_iter,
        "optim.tr_grad_tol": opt.tr_grad_tol,
        "optim.fd_rel_step": opt.fd_rel_step,
        "optim.cma_budget": opt.cma_budget,
        "experiment.nh": plan.nh_values,
        "experiment.nl": plan.n_lf,
        "experiment.repetitions": plan.repetitions,
        "experiment.test_size": plan.test_size,
        "experiment.replications": plan.replications,
    }
    for key, value in lines.items():
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        print(f"{key} = {value}")
    print("# input model file syntax, one variable per line:")
    print("#   x1 = uniform(0, 2)")
    print("#   r_w = gaussian(0.1, 0.016)")
    print("#   r = lognormal(7.71, 1.0056)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mfglam", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-glam", help="fit a single-fidelity GLaM from a dataset CSV")
    p.add_argument("dataset", help="CSV with input columns plus a 'y' column")
    _add_fit_common(p)
    p.set_defaults(func=_cmd_fit_glam)

    p = sub.add_parser("fit-mfglam", help="fit a multifidelity GLaM from HF and LF CSVs")
    p.add_argument("hf_dataset")
    p.add_argument("lf_dataset")
    _add_fit_common(p)
    p.add_argument("--p", type=float, default=0.5, help="fidelity weight in (0,1)")
    p.add_argument("--lf-columns", default="", help="comma list of HF column indices used by the LF model")
    p.set_defaults(func=_cmd_fit_mfglam)

    p = sub.add_parser("predict", help="evaluate a fitted model at points")
    p.add_argument("model")
    p.add_argument("points")
    p.add_argument("--out", default="predictions.csv")
    p.add_argument("--quantiles", default="", help="comma list of levels in [0,1]")
    p.add_argument("--pdf-grid", default="", help="LO:HI:COUNT or auto:COUNT")
    p.add_argument("--moments", action="store_true")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("simulate", help="draw a training dataset from a built-in simulator")
    p.add_argument("--which", required=True, choices=sorted(_SIMULATORS))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--design", choices=["lhs", "mc"], default="lhs")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default="dataset.csv")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("validate", help="score a model against a reference")
    p.add_argument("model")
    p.add_argument("--reference-model", default="", help="model JSON used as analytic reference")
    p.add_argument("--reference-samples", default="", help="CSV of points plus replication columns")
    p.add_argument("--test", default="", help="test points CSV (with --reference-model)")
    p.add_argument("--out", default="metrics.json")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("experiment", help="run a repetition study from a plan config")
    p.add_argument("plan")
    p.add_argument("--out", default="experiment-out")
    p.add_argument("--workers", type=int, default=None, help="override plan worker count")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("defaults", help="print all configuration defaults")
    p.set_defaults(func=_cmd_defaults)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FittingError as err:
        print(f"fit failed: {err}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
