"""Command line: fit, predict, pdp, varselect, and simulate over CSV data.

Exit codes: 0 ok, 2 input error, 3 contract error (e.g. predicting from an
archive without cached trees), 4 internal error.  All outputs are
deterministic for a fixed ``--seed``.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np
import pandas as pd

from . import datasets
from .archive import load_archive, save_archive
from .errors import ContractError
from .models import (
    PartialLinearForest,
    SoftForestProbit,
    SoftForestRegressor,
    VaryingCoefficientForest,
)
from .preprocess import DummyTransform
from .summaries import partial_dependence, posterior_probs, rmse
from .trees import LEAF

__all__ = ["main"]


# -- CSV I/O ---------------------------------------------------------------


def _parse_number(text: str):
    value = float(text)
    if not np.isfinite(value):
        raise ValueError(f"non-finite value '{text}'")
    return value


def read_table(path, force_categorical: set[str] | None = None) -> pd.DataFrame:
    """RFC-4180 CSV with a header row.  A column is numeric when every cell
    parses as a finite float, categorical otherwise (or when forced)."""
    force_categorical = force_categorical or set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
        rows = list(reader)
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise ValueError(f"{path}: row {i + 2} has {len(row)} fields, expected {len(header)}")
    columns: dict[str, list] = {}
    for j, name in enumerate(header):
        raw = [row[j] for row in rows]
        if any(cell == "" for cell in raw):
            raise ValueError(f"{path}: column '{name}' has missing values")
        if name in force_categorical:
            columns[name] = raw
            continue
        try:
            columns[name] = [_parse_number(cell) for cell in raw]
        except ValueError:
            columns[name] = raw
    return pd.DataFrame(columns, columns=header)


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_table(path, header: list[str], rows) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_draw_matrix(path, draws: np.ndarray) -> None:
    header = ["draw_index"] + [f"pred_{i + 1}" for i in range(draws.shape[1])]
    rows = ([it + 1] + [float(v) for v in draws[it]] for it in range(draws.shape[0]))
    write_table(path, header, rows)


# -- shared option parsing ---------------------------------------------------


def _split_names(values) -> list[str]:
    out = []
    for item in values or []:
        out.extend(name for name in item.split(",") if name)
    return out


def _drop_columns(table: pd.DataFrame, names: list[str], path: str) -> pd.DataFrame:
    unknown = [n for n in names if n not in table.columns]
    if unknown:
        raise ValueError(f"{path}: unknown columns {unknown}")
    return table.drop(columns=names)


def _model_params(args) -> dict:
    params = dict(
        num_tree=args.trees,
        gamma=args.gamma,
        beta=args.beta,
        tau_scale=args.tau_scale,
        soft=not args.hard_trees,
        num_burn=args.burn,
        num_save=args.save,
        num_thin=args.thin,
        update_s=not args.no_update_s,
        update_sigma_mu=not args.no_update_sigma_mu,
        cache_trees=not args.no_cache_trees,
        random_state=args.seed,
    )
    if args.k is not None:
        params["k"] = args.k
    return params


# -- subcommands -------------------------------------------------------------


def cmd_fit(args) -> int:
    categorical = set(_split_names(args.as_categorical))
    table = read_table(args.data, categorical)
    exclude = _split_names(args.exclude)
    if exclude:
        table = _drop_columns(table, exclude, args.data)
    if args.outcome not in table.columns:
        raise ValueError(f"{args.data}: unknown outcome column '{args.outcome}'")
    z_names = _split_names(args.z_column)
    test_table = read_table(args.test, categorical) if args.test else None
    if test_table is not None and exclude:
        test_table = _drop_columns(
            test_table, [c for c in exclude if c in test_table.columns], args.test
        )

    def covariates(tab):
        drop = [args.outcome] + z_names
        return tab.drop(columns=[c for c in drop if c in tab.columns])

    def z_matrix(tab, path):
        missing = [n for n in z_names if n not in tab.columns]
        if missing:
            raise ValueError(f"{path}: missing z columns {missing}")
        return np.column_stack([tab[n].to_numpy(dtype=np.float64) for n in z_names])

    X = covariates(table)
    y = table[args.outcome]
    X_test = covariates(test_table) if test_table is not None else None
    params = _model_params(args)
    params["categorical"] = sorted(categorical) or None
    summary: dict = {
        "model": args.model,
        "seed": args.seed,
        "n_train": len(table),
        "num_save": args.save,
    }
    if test_table is not None:
        summary["n_test"] = len(test_table)

    if args.model == "regression":
        model = SoftForestRegressor(
            k=params.pop("k", 2.0),
            update_sigma=not args.no_update_sigma,
            **params,
        )
        model.fit(X, y, X_test=X_test)
        train_mean = model.y_hat_train_mean_
        test_mean = model.y_hat_test_mean_ if X_test is not None else None
        summary["sigma_mean"] = float(model.sigma_draws_.mean())
        summary["train_rmse"] = rmse(train_mean, y.to_numpy(dtype=np.float64))
        vs = posterior_probs(model)
        summary["median_probability_model"] = [int(i) for i in vs.median_probability_model]
        summary["pip"] = {v: float(p) for v, p in zip(vs.variables, vs.post_probs)}
        write_table(
            args.out + ".sigma_draws.csv",
            ["draw_index", "sigma"],
            ((i + 1, float(s)) for i, s in enumerate(model.sigma_draws_)),
        )
    elif args.model == "probit":
        model = SoftForestProbit(k=params.pop("k", 1.0 / 6.0), **params)
        model.fit(X, y, X_test=X_test)
        train_mean = model.p_train_draws_.mean(axis=0)
        test_mean = (
            model.p_test_draws_.mean(axis=0) if X_test is not None else None
        )
        y01 = (table[args.outcome].astype(str).to_numpy() == str(model.classes_[1])).astype(int) \
            if model.classes_.dtype.kind not in "if" else y.to_numpy(dtype=np.float64)
        summary["train_misclass"] = float(np.mean((train_mean > 0.5) != (y01 == 1)))
        vs = posterior_probs(model)
        summary["median_probability_model"] = [int(i) for i in vs.median_probability_model]
        summary["pip"] = {v: float(p) for v, p in zip(vs.variables, vs.post_probs)}
    elif args.model == "vc":
        if len(z_names) != 1:
            raise ValueError("--model vc requires exactly one --z-column")
        model = VaryingCoefficientForest(
            k=params.pop("k", 2.0),
            update_sigma=not args.no_update_sigma,
            **params,
        )
        z = z_matrix(table, args.data)[:, 0]
        z_test = z_matrix(test_table, args.test)[:, 0] if test_table is not None else None
        model.fit(X, y, z, X_test=X_test, z_test=z_test)
        train_mean = model.mu_draws_.mean(axis=0)
        test_mean = (
            model.mu_test_draws_.mean(axis=0)
            if getattr(model, "mu_test_draws_", None) is not None
            else None
        )
        summary["sigma_mean"] = float(model.sigma_draws_.mean())
        summary["train_rmse"] = rmse(train_mean, y.to_numpy(dtype=np.float64))
    elif args.model == "gbart":
        if not z_names:
            raise ValueError("--model gbart requires at least one --z-column")
        model = PartialLinearForest(
            k=params.pop("k", 2.0),
            update_sigma=not args.no_update_sigma,
            **params,
        )
        Z = z_matrix(table, args.data)
        Z_test = z_matrix(test_table, args.test) if test_table is not None else None
        model.fit(X, y, Z, X_test=X_test, Z_test=Z_test)
        train_mean = model.mu_draws_.mean(axis=0)
        test_mean = (
            (model.r_test_draws_ + model.eta_test_draws_).mean(axis=0)
            if model.r_test_draws_ is not None and model.eta_test_draws_ is not None
            else None
        )
        summary["sigma_mean"] = float(model.sigma_draws_.mean())
        summary["beta_mean"] = [float(b) for b in model.beta_draws_.mean(axis=0)]
        summary["train_rmse"] = rmse(train_mean, y.to_numpy(dtype=np.float64))
    else:
        raise ValueError(f"unknown model '{args.model}'")

    if test_table is not None and args.outcome in test_table.columns and test_mean is not None:
        y_test = test_table[args.outcome]
        if args.model == "probit":
            codes = (y_test.astype(str).to_numpy() == str(model.classes_[1])).astype(int) \
                if model.classes_.dtype.kind not in "if" else y_test.to_numpy(dtype=np.float64)
            summary["test_misclass"] = float(np.mean((test_mean > 0.5) != (codes == 1)))
        else:
            summary["test_rmse"] = rmse(test_mean, y_test.to_numpy(dtype=np.float64))

    save_archive(args.out, model, extra={"z_columns": z_names, "seed": args.seed})
    write_table(
        args.out + ".train_mean.csv",
        ["row", "prediction"],
        ((i + 1, float(v)) for i, v in enumerate(train_mean)),
    )
    if test_mean is not None:
        write_table(
            args.out + ".test_mean.csv",
            ["row", "prediction"],
            ((i + 1, float(v)) for i, v in enumerate(test_mean)),
        )
    _write_json(args.out + ".summary.json", summary)
    for key in sorted(summary):
        value = summary[key]
        if key == "pip":
            continue
        if key == "median_probability_model":
            value = " ".join(str(v) for v in value)
        sys.stdout.write(f"{key}: {_fmt(value) if not isinstance(value, list) else value}\n")
    return 0


def _load_for_prediction(args):
    model = load_archive(args.archive)
    if model.tree_records_ is None:
        raise ContractError(
            "archive was saved without cached trees (cache_trees=False); "
            "refit with caching enabled to predict"
        )
    return model


def cmd_predict(args) -> int:
    model = _load_for_prediction(args)
    kind = model.archive_header_["kind"]
    categorical = {
        t.name for t in model.transforms_.transforms if isinstance(t, DummyTransform)
    }
    table = read_table(args.data, categorical)
    z_names = model.archive_header_.get("z_columns") or []
    if kind == "regression":
        draws = model.predict_draws(table)
    elif kind == "probit":
        draws = model.predict_proba_draws(table)
    elif kind == "vc":
        if z_names[0] not in table.columns:
            raise ValueError(f"{args.data}: missing z column '{z_names[0]}'")
        z = table[z_names[0]].to_numpy(dtype=np.float64)
        draws = model.predict_draws(table, z)
    else:
        missing = [n for n in z_names if n not in table.columns]
        if missing:
            raise ValueError(f"{args.data}: missing z columns {missing}")
        Z = np.column_stack([table[n].to_numpy(dtype=np.float64) for n in z_names])
        draws = model.predict_draws(table, Z)
    mean = draws.mean(axis=0) if draws.shape[1] else np.empty(0)
    write_table(
        args.out,
        ["row", "prediction"],
        ((i + 1, float(v)) for i, v in enumerate(mean)),
    )
    _write_draw_matrix(args.out + ".draws.csv", draws)
    return 0


def cmd_pdp(args) -> int:
    model = _load_for_prediction(args)
    kind = model.archive_header_["kind"]
    if kind not in ("regression", "probit"):
        raise ValueError("pdp supports regression and probit archives")
    categorical = {
        t.name for t in model.transforms_.transforms if isinstance(t, DummyTransform)
    }
    table = read_table(args.data, categorical)
    names = model.transforms_.variable_names
    if args.variable not in names:
        raise ValueError(f"unknown variable '{args.variable}'")
    tform = model.transforms_.transforms[names.index(args.variable)]
    if isinstance(tform, DummyTransform):
        grid = list(tform.levels)
    else:
        col = table[args.variable].to_numpy(dtype=np.float64) if args.variable in table.columns else None
        lo = args.grid_min if args.grid_min is not None else float(col.min())
        hi = args.grid_max if args.grid_max is not None else float(col.max())
        grid = list(np.linspace(lo, hi, args.grid_steps))
    _, tidy = partial_dependence(model, table, args.variable, grid)
    write_table(
        args.out,
        ["draw_index", "grid_value", "pd_value"],
        (
            (int(r.draw_index) + 1, r.grid_value, float(r.pd_value))
            for r in tidy.itertuples()
        ),
    )
    return 0


def cmd_varselect(args) -> int:
    model = _load_for_prediction(args)
    kind = model.archive_header_["kind"]
    if kind not in ("regression", "probit"):
        raise ValueError("varselect supports regression and probit archives")
    num_cols = model.transforms_.num_cols
    counts = np.zeros((len(model.tree_records_), num_cols), dtype=np.int64)
    for i, rec in enumerate(model.tree_records_):
        for tree in rec["trees"]:
            var = np.asarray(tree["var"])
            counts[i] += np.bincount(var[var != LEAF], minlength=num_cols)
    vs = posterior_probs(counts, model.column_map_)
    write_table(
        args.out,
        ["variable", "pip", "varimp"],
        (
            (v, float(p), float(imp))
            for v, p, imp in zip(vs.variables, vs.post_probs, vs.varimp)
        ),
    )
    mpm = " ".join(str(int(i)) for i in vs.median_probability_model)
    sys.stdout.write(f"median_probability_model: {mpm}\n")
    return 0


def cmd_simulate(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.setting in ("friedman", "gbart"):
        df = datasets.sim_friedman(rng, args.n, args.p, args.sigma)
    elif args.setting == "sine":
        df = datasets.sim_sine(rng, args.n, args.sigma)
    elif args.setting == "probit":
        df = datasets.sim_probit(rng, args.n, args.p)
    elif args.setting == "vc":
        df = datasets.sim_vc(rng, args.n, args.p, args.sigma)
    else:
        raise ValueError(f"unknown setting '{args.setting}'")
    write_table(
        args.out,
        list(df.columns),
        (tuple(row) for row in df.itertuples(index=False)),
    )
    return 0


# -- argument parsing --------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="softforest",
        description="Fit, predict, and summarize soft decision-tree ensembles on CSV data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a model and write an archive")
    fit.add_argument("--model", choices=["regression", "probit", "vc", "gbart"], default="regression")
    fit.add_argument("--data", required=True)
    fit.add_argument("--outcome", required=True)
    fit.add_argument("--test")
    fit.add_argument("--trees", type=int, default=20)
    fit.add_argument("--burn", type=int, default=2500)
    fit.add_argument("--save", type=int, default=2500)
    fit.add_argument("--thin", type=int, default=1)
    fit.add_argument("--gamma", type=float, default=0.95)
    fit.add_argument("--beta", type=float, default=2.0)
    fit.add_argument("--k", type=float, default=None)
    fit.add_argument("--tau-scale", type=float, default=0.1)
    fit.add_argument("--no-update-s", action="store_true")
    fit.add_argument("--no-update-sigma", action="store_true")
    fit.add_argument("--no-update-sigma-mu", action="store_true")
    fit.add_argument("--no-cache-trees", action="store_true")
    fit.add_argument("--hard-trees", action="store_true")
    fit.add_argument("--z-column", action="append")
    fit.add_argument("--exclude", action="append")
    fit.add_argument("--as-categorical", action="append")
    fit.add_argument("--seed", type=int, required=True)
    fit.add_argument("--out", required=True)
    fit.set_defaults(func=cmd_fit)

    predict = sub.add_parser("predict", help="predict on a new CSV from an archive")
    predict.add_argument("--archive", required=True)
    predict.add_argument("--data", required=True)
    predict.add_argument("--out", required=True)
    predict.set_defaults(func=cmd_predict)

    pdp = sub.add_parser("pdp", help="partial dependence table for one variable")
    pdp.add_argument("--archive", required=True)
    pdp.add_argument("--data", required=True)
    pdp.add_argument("--variable", required=True)
    pdp.add_argument("--grid-min", type=float)
    pdp.add_argument("--grid-max", type=float)
    pdp.add_argument("--grid-steps", type=int, default=10)
    pdp.add_argument("--out", required=True)
    pdp.set_defaults(func=cmd_pdp)

    varselect = sub.add_parser("varselect", help="inclusion probabilities and importances")
    varselect.add_argument("--archive", required=True)
    varselect.add_argument("--out", required=True)
    varselect.set_defaults(func=cmd_varselect)

    simulate = sub.add_parser("simulate", help="write a synthetic benchmark CSV")
    simulate.add_argument(
        "--setting",
        choices=["friedman", "sine", "probit", "vc", "gbart"],
        default="friedman",
    )
    simulate.add_argument("--n", type=int, default=250)
    simulate.add_argument("--p", type=int, default=5)
    simulate.add_argument("--sigma", type=float, default=1.0)
    simulate.add_argument("--seed", type=int, required=True)
    simulate.add_argument("--out", required=True)
    simulate.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ContractError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 3
    except (ValueError, KeyError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except Exception as exc:  # pragma: no cover
        sys.stderr.write(f"internal error: {exc}\n")
        return 4


if __name__ == "__main__":
    sys.exit(main())
