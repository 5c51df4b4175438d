"""Command-line front end.

Results go to stdout as JSON with sorted keys; plot data goes to CSV files.
Spreads, option prices and error bounds are reported in basis points of
notional and times in year fractions.  Exit codes: 0 success, 2 invalid
input or violated constraints, 3 capacity limits, 1 anything else (for
example a calibration in which no start is admissible).  Errors are
written to stderr as a JSON object.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import os
import sys

import numpy as np

from . import __version__
from .exceptions import CalibrationError, CapacityError, InvalidInputError, LinearCreditError
from .io import (
    CONTRACT_SCHEMA,
    MODEL_SCHEMA,
    OPTION_SCHEMA,
    PORTFOLIO_SCHEMA,
    TRANCHE_SCHEMA,
    dumps,
    load_json,
    model_from_dict,
    model_to_dict,
    portfolio_from_dict,
    state_from_dict,
)
from .model import LhccParams, LhcParams, LinearModel, State, lhcc_to_lhc, validate_lhc
from .pricing import BP, TenorGrid

__all__ = ["main", "build_parser", "run"]

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2
EXIT_CAPACITY = 3


class _UsageError(InvalidInputError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- helpers

def _model_and_state(path, need_state=True):
    doc = load_json(path, MODEL_SCHEMA)
    model = model_from_dict(doc)
    state = state_from_dict(doc, model) if need_state or "state" in doc else None
    return doc, model, state


def _write_csv(path, header, rows):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _lhc_only(model, what):
    if isinstance(model, LinearModel):
        raise InvalidInputError(f"{what} needs an 'lhc' or 'lhcc' model")
    return model


def _parse_list(text, cast=float):
    try:
        return [cast(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise InvalidInputError(f"cannot parse list {text!r}") from exc


def _parse_orders(text):
    if "-" in text and "," not in text:
        lo, hi = text.split("-", 1)
        try:
            lo, hi = int(lo), int(hi)
        except ValueError as exc:
            raise InvalidInputError(f"cannot parse order range {text!r}") from exc
        if lo < 1 or hi < lo:
            raise InvalidInputError("order range must satisfy 1 <= lo <= hi")
        return list(range(lo, hi + 1))
    return _parse_list(text, int)


# ---------------------------------------------------------------- subcommands

def cmd_validate(args):
    doc = load_json(args.model, MODEL_SCHEMA)
    model = model_from_dict(doc)
    out = {"type": doc["type"]}
    ok = True
    if isinstance(model, LhccParams):
        gap = model.gap()
        out["cascade_gap"] = gap.tolist()
        out["cascade_satisfied"] = bool(np.all(gap >= -args.tol))
        out["binding"] = model.binding(args.binding_tol).tolist()
        out["binding_tol"] = args.binding_tol
        ok = out["cascade_satisfied"]
        lhc = lhcc_to_lhc(model, check=False)
    elif isinstance(model, LhcParams):
        lhc = model
    else:
        lhc = None
        out["dim"] = model.dim
    if lhc is not None:
        rep = validate_lhc(lhc, tol=args.tol)
        out["inward_drift"] = rep.as_dict()
        ok = ok and rep.valid
    if "state" in doc:
        st = state_from_dict(doc, model)
        if isinstance(st, State):
            inside = bool(st.y > 0 and np.all(st.x >= -args.tol) and np.all(st.x <= st.y + args.tol))
            out["state_inside"] = inside
            ok = ok and inside
    out["valid"] = bool(ok)
    return out, (EXIT_OK if ok else EXIT_INVALID)


def cmd_price(args):
    from .pricing import (
        bond_recovery_default,
        bond_recovery_maturity,
        bond_zero,
        cds_legs,
        contingent_default,
        ucva,
    )

    _, model, s = _model_and_state(args.model)
    c = load_json(args.contract, CONTRACT_SCHEMA)
    t = c.get("t", 0.0)
    tM = c["tM"]
    r = c.get("r", 0.0)
    delta = c.get("recovery", 0.4)
    out = {"type": c["type"], "t": t, "tM": tM, "r": r}
    if c["type"] == "bond":
        kind = c.get("bond", "zero")
        if kind == "zero":
            price = bond_zero(model, s, t, tM, r)
        elif kind == "recovery_maturity":
            price = bond_recovery_maturity(model, t, tM, r, delta)(s)
        elif kind == "recovery_default":
            price = bond_recovery_default(model, s, t, tM, r, delta)
        else:
            price = contingent_default(model, s, t, tM, r)
        out.update({"bond": kind, "price": float(price), "price_bp": float(price) / BP})
    elif c["type"] == "cds":
        t0 = c.get("t0", t)
        grid = TenorGrid.regular(t0, tM, c.get("frequency", 4))
        legs = cds_legs(model, t, grid, r, delta)
        prot, prem = legs.values(s)
        out.update({
            "t0": t0, "recovery": delta, "frequency": c.get("frequency", 4),
            "spread_bp": legs.spread(s) / BP, "protection_bp": prot / BP, "premium_annuity": prem,
            "psi_prot": legs.psi_prot.tolist(), "psi_prem": legs.psi_prem.tolist(),
        })
        if "strike_bp" in c:
            k = c["strike_bp"] * BP
            out["value_bp"] = (prot - k * prem) / BP
            out["psi_cds"] = legs.psi_cds(k).tolist()
    else:
        model = _lhc_only(model, "ucva")
        if "exposure" not in c:
            raise InvalidInputError("a ucva contract needs an 'exposure' polynomial")
        m = model.m
        poly = {}
        for term in c["exposure"]:
            e = tuple(term["exponents"])
            if len(e) != 1 + m:
                raise InvalidInputError(f"exposure exponents need {1 + m} entries")
            poly[e] = poly.get(e, 0.0) + term["coefficient"]
        val = ucva(model, s, t, tM, r, poly, nodes=c.get("nodes", 64))
        out.update({"ucva": val, "ucva_bp": val / BP})
    return out, EXIT_OK


def _option_price(model, s, o, order):
    from .options import cdis_option_homogeneous, cds_option_price

    t = o.get("t", 0.0)
    k = o["strike_bp"] * BP
    r = o.get("r", 0.0)
    delta = o.get("recovery", 0.4)
    freq = o.get("frequency", 4)
    if o["type"] == "cds":
        if o.get("method", "legendre") != "legendre":
            raise InvalidInputError("CDS options use the Legendre method")
        return cds_option_price(model, s, t, o["t0"], o["tM"], k, order, r, delta, freq)
    if o.get("method", "chebyshev") != "chebyshev":
        raise InvalidInputError("index options use the Chebyshev method")
    if "n_firms" not in o:
        raise InvalidInputError("an index option needs 'n_firms'")
    return cdis_option_homogeneous(model, s, t, o["t0"], o["tM"], k, o["n_firms"], o.get("n_defaulted", 0),
                                   order, r, delta, freq)


def _option_inputs(args):
    _, model, s = _model_and_state(args.model)
    model = _lhc_only(model, "option pricing")
    o = load_json(args.option, OPTION_SCHEMA)
    if o["t0"] > o["tM"] or o.get("t", 0.0) > o["t0"]:
        raise InvalidInputError("option dates must satisfy t <= t0 <= tM")
    return model, s, o


def cmd_option(args):
    model, s, o = _option_inputs(args)
    order = args.order if args.order is not None else o["order"]
    res = _option_price(model, s, o, order)
    out = {
        "type": o["type"], "order": int(order), "strike_bp": o["strike_bp"],
        "price_bp": res.price / BP, "error_bound_bp": res.error_bound / BP,
    }
    if args.coefficients and res.approx is not None and hasattr(res.approx, "coefficients"):
        out["coefficients"] = np.asarray(res.approx.coefficients).tolist()
    if args.csv:
        orders = _parse_orders(args.orders)
        rows = [(n, *_bp_pair(_option_price(model, s, o, n))) for n in orders]
        _write_csv(args.csv, ["order", "price_bp", "error_bound_bp"], rows)
        out["csv"] = args.csv
    return out, EXIT_OK


def _bp_pair(res):
    return res.price / BP, res.error_bound / BP


def cmd_convergence(args):
    model, s, o = _option_inputs(args)
    orders = _parse_orders(args.orders)
    rows = [(n, *_bp_pair(_option_price(model, s, o, n))) for n in orders]
    if args.csv:
        _write_csv(args.csv, ["order", "price_bp", "error_bound_bp"], rows)
    return {
        "orders": [r[0] for r in rows],
        "price_bp": [r[1] for r in rows],
        "error_bound_bp": [r[2] for r in rows],
        "csv": args.csv,
    }, EXIT_OK


def cmd_sensitivity(args):
    model, s, o = _option_inputs(args)
    order = args.order if args.order is not None else o["order"]
    lhc = lhcc_to_lhc(model, check=False) if isinstance(model, LhccParams) else model
    out = {"order": int(order)}
    sig_rows, x_rows = [], []
    for sv in _parse_list(args.sigmas):
        p = lhc.with_sigma(np.full(lhc.m, sv))
        sig_rows.append((sv, _option_price(p, s, o, order).price / BP))
    for xv in _parse_list(args.x0s):
        st = State(s.y, np.full(lhc.m, xv))
        x_rows.append((xv, _option_price(lhc, st, o, order).price / BP))
    out["sigma"] = {"values": [r[0] for r in sig_rows], "price_bp": [r[1] for r in sig_rows]}
    out["x0"] = {"values": [r[0] for r in x_rows], "price_bp": [r[1] for r in x_rows]}
    if args.out_dir:
        _write_csv(os.path.join(args.out_dir, "sensitivity_sigma.csv"), ["sigma", "price_bp"], sig_rows)
        _write_csv(os.path.join(args.out_dir, "sensitivity_x0.csv"), ["x0", "price_bp"], x_rows)
        out["out_dir"] = args.out_dir
    return out, EXIT_OK


def cmd_cdis(args):
    from .portfolio import cdis_legs

    pf, states, alive = portfolio_from_dict(load_json(args.portfolio, PORTFOLIO_SCHEMA))
    c = load_json(args.contract, TRANCHE_SCHEMA)
    t = c.get("t", 0.0)
    grid = TenorGrid.regular(c.get("t0", t), c["tM"], c.get("frequency", 4))
    r = c.get("r", 0.0)
    if not alive.any():
        from .exceptions import EmptyPortfolioError

        raise EmptyPortfolioError("every firm in the portfolio has defaulted")
    prot, prem = cdis_legs(pf, states, alive, t, grid, r)
    out = {
        "n_firms": pf.n_firms, "n_alive": int(alive.sum()), "construction": pf.construction,
        "spread_bp": float(prot.sum() / prem.sum()) / BP,
        "protection_bp": (prot / BP).tolist(), "premium_annuity": prem.tolist(),
    }
    return out, EXIT_OK


def cmd_tranche(args):
    from .portfolio import tranche_legs_homogeneous

    pf, states, alive = portfolio_from_dict(load_json(args.portfolio, PORTFOLIO_SCHEMA))
    c = load_json(args.contract, TRANCHE_SCHEMA)
    if not pf.is_homogeneous() or pf.d != 1 or pf.construction != "linear":
        raise InvalidInputError("closed-form tranches need identical firms on a single block")
    N = pf.n_firms
    N_t = int(c.get("n_defaulted", int((~alive).sum())))
    lo, hi = c.get("lower", 0), c.get("upper", N)
    if not 0 <= lo < hi <= N:
        raise InvalidInputError(f"tranche bounds must satisfy 0 <= lower < upper <= {N}")
    t = c.get("t", 0.0)
    grid = TenorGrid.regular(c.get("t0", t), c["tM"], c.get("frequency", 4))
    r = c.get("r", 0.0)
    prot, prem = tranche_legs_homogeneous(pf.blocks[0], states[0], t, grid, lo, hi, pf.recovery, r, N, N_t)
    out = {
        "n_firms": N, "n_defaulted": N_t, "lower": lo, "upper": hi,
        "protection": prot, "premium_annuity": prem,
        "par_spread_bp": (prot / prem) / BP if prem > 0 else None,
    }
    if "spread_bp" in c:
        out["value"] = prot - c["spread_bp"] * BP * prem
    return out, EXIT_OK


def cmd_simulate(args):
    from .sim import PathConfig, mean_se, simulate_paths

    doc, model, s = _model_and_state(args.model)
    model = _lhc_only(model, "simulation")
    times = tuple(sorted(set(_parse_list(args.times)) | {args.horizon}))
    if any(tt < 0 or tt > args.horizon for tt in times):
        raise InvalidInputError("record times must lie in [0, horizon]")
    cfg = PathConfig(
        dt=args.dt, horizon=args.horizon, n_paths=args.paths, seed=args.seed, scheme=args.scheme,
        increments=args.increments, record_times=times, antithetic=args.antithetic,
        store_paths=bool(args.export_paths),
    )
    ens = simulate_paths(model, s, cfg, firm_weights=np.ones((1, 1)))
    rows = []
    for tt in ens.times:
        st = ens.state_at(float(tt))
        y_mean, y_se = mean_se(st[:, 0], args.antithetic)
        entry = {"t": float(tt), "y_mean": y_mean, "y_se": y_se}
        entry["x_mean"] = st[:, 1:].mean(axis=0).tolist()
        rows.append(entry)
    tau = ens.default_times[:, 0]
    out = {
        "paths": ens.n_paths, "dt": float(cfg.step), "seed": args.seed, "records": rows,
        "default_fraction": float(np.mean(np.isfinite(tau))), "adjusted_fraction": ens.adjusted_fraction,
    }
    if args.export_paths:
        if ens.n_paths * (ens.paths.shape[1]) > 5_000_000:
            print(json.dumps({"warning": "large path export", "rows": int(ens.n_paths * ens.paths.shape[1])}),
                  file=sys.stderr)
        grid = ens.grid
        m = model.m
        with open(args.export_paths, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["path", "t", "y"] + [f"x{i + 1}" for i in range(m)])
            for p in range(ens.n_paths):
                for k, tt in enumerate(grid):
                    v = ens.paths[p, k]
                    w.writerow([p, repr(float(tt))] + [repr(float(z)) for z in v])
        out["paths_csv"] = args.export_paths
    return out, EXIT_OK


def cmd_calibrate(args):
    from .calib import QuotePanel, calibrate

    panel = QuotePanel.from_csv(args.quotes, firm=args.firm, recovery=args.recovery, r=args.r)
    sigma = _parse_list(args.sigma) if args.sigma else None
    if sigma is not None and len(sigma) == 1:
        sigma = sigma * args.m
    res = calibrate(
        panel, args.m, gamma1=args.gamma1, n_starts=args.starts, seed=args.seed, sigma=sigma,
        frequency=args.frequency, normalization=args.normalization,
    )
    out = res.as_dict()
    out["model"] = model_to_dict(res.params)
    out["firm"] = panel.firm
    out["n_dates"] = panel.n_dates
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        label = f"LHCC({args.m})" + ("*" if args.gamma1 is not None else "")
        res.table.to_csv(label, os.path.join(args.out_dir, "rmse.csv"))
        res.filtered.to_csv(panel.dates, os.path.join(args.out_dir, "factors.csv"))
        with open(os.path.join(args.out_dir, "model.json"), "w") as fh:
            fh.write(dumps(out["model"]) + "\n")
        out["out_dir"] = args.out_dir
    return out, EXIT_OK


# ---------------------------------------------------------------- parser

def _positive_int(text):
    try:
        v = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from exc
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _positive_float(text):
    try:
        v = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc
    if not np.isfinite(v) or v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="linearcredit",
        description="Linear credit risk models: pricing, options, portfolios, simulation and calibration. "
        "Spreads, option prices and error bounds are in basis points; times are year fractions.",
        allow_abbrev=False,
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="worker threads for simulation (default: LINEARCREDIT_THREADS or all cores)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_, description=help_, allow_abbrev=False)
        return sp

    sp = add("validate", "check model parameters and the initial state against the model constraints")
    sp.add_argument("model", help="model JSON (lhcc, lhc or linear)")
    sp.add_argument("--tol", type=float, default=1e-12, help="slack tolerance for constraint checks")
    sp.add_argument("--binding-tol", type=float, default=5e-3,
                    help="a cascade constraint is reported as binding when |gap| <= this value")
    sp.set_defaults(func=cmd_validate)

    sp = add("price", "closed-form bond, CDS or UCVA value (spreads in bp)")
    sp.add_argument("model", help="model JSON with a 'state'")
    sp.add_argument("contract", help="contract JSON {type: bond|cds|ucva, t, t0, tM, frequency, recovery, r}")
    sp.set_defaults(func=cmd_price)

    def option_args(sp, csv_flag=True):
        sp.add_argument("model", help="lhc or lhcc model JSON with a 'state'")
        sp.add_argument("option", help="option JSON {type: cds|cdis, t0, tM, strike_bp, order, method}")

    sp = add("option", "CDS or CDS index option price and error bound in bp")
    option_args(sp)
    sp.add_argument("--order", type=_positive_int, default=None, help="override the approximation order")
    sp.add_argument("--coefficients", action="store_true", help="include the approximation coefficients")
    sp.add_argument("--csv", default=None, help="also write (order, price_bp, error_bound_bp) rows here")
    sp.add_argument("--orders", default="1-30", help="orders for --csv, a range lo-hi or a comma list")
    sp.set_defaults(func=cmd_option)

    sp = add("convergence", "option price and error bound against the approximation order")
    option_args(sp)
    sp.add_argument("--orders", default="1-30", help="a range lo-hi or a comma list")
    sp.add_argument("--csv", default=None, help="output CSV (order, price_bp, error_bound_bp)")
    sp.set_defaults(func=cmd_convergence)

    sp = add("sensitivity", "option price against volatility and initial factor level")
    option_args(sp)
    sp.add_argument("--order", type=_positive_int, default=None)
    sp.add_argument("--sigmas", default="0.25,0.5,0.75,1.0", help="comma list of volatilities")
    sp.add_argument("--x0s", default="0.1,0.2,0.3", help="comma list of initial factor values")
    sp.add_argument("--out-dir", default=None, help="directory for sensitivity_sigma.csv and sensitivity_x0.csv")
    sp.set_defaults(func=cmd_sensitivity)

    sp = add("cdis", "CDS index par spread in bp with per-firm legs")
    sp.add_argument("portfolio", help="portfolio JSON {blocks, firms, recovery}")
    sp.add_argument("contract", help="contract JSON {t, t0, tM, frequency, r}")
    sp.set_defaults(func=cmd_cdis)

    sp = add("tranche", "tranche legs and par spread on identical firms")
    sp.add_argument("portfolio", help="portfolio JSON with one block and identical firms")
    sp.add_argument("contract", help="contract JSON {t, t0, tM, frequency, r, lower, upper, spread_bp}")
    sp.set_defaults(func=cmd_tranche)

    sp = add("simulate", "Monte Carlo paths of an LHC model")
    sp.add_argument("model", help="lhc or lhcc model JSON with a 'state'")
    sp.add_argument("--paths", type=_positive_int, default=10000)
    sp.add_argument("--dt", type=_positive_float, default=1e-3)
    sp.add_argument("--horizon", type=_positive_float, default=1.0)
    sp.add_argument("--times", default="", help="comma list of record times in [0, horizon]")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--scheme", choices=["exact", "euler"], default="exact")
    sp.add_argument("--increments", choices=["two_point", "gaussian"], default="two_point")
    sp.add_argument("--antithetic", action="store_true")
    sp.add_argument("--export-paths", default=None,
                    help="write every path to this CSV (path, t, y, x...); output grows with paths x steps")
    sp.set_defaults(func=cmd_simulate)

    sp = add("calibrate", "fit a cascade model to a CDS quote panel")
    sp.add_argument("quotes", help="CSV with header date,tenor_years,spread_bp")
    sp.add_argument("--m", type=_positive_int, default=2, help="number of factors")
    sp.add_argument("--gamma1", type=_positive_float, default=None, help="fix gamma1 instead of fitting it")
    sp.add_argument("--starts", type=_positive_int, default=16, help="randomised starts")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--r", type=float, default=0.0, help="short rate")
    sp.add_argument("--recovery", type=float, default=0.4)
    sp.add_argument("--frequency", type=_positive_int, default=4, help="premium payments per year")
    sp.add_argument("--sigma", default=None, help="volatilities stored with the result (not fitted)")
    sp.add_argument("--firm", default="")
    sp.add_argument("--normalization", choices=["binding", "free"], default="binding")
    sp.add_argument("--out-dir", default=None, help="directory for rmse.csv, factors.csv and model.json")
    sp.set_defaults(func=cmd_calibrate)
    return p


def _error(kind: str, exc: BaseException) -> str:
    return json.dumps({"error": kind, "message": str(exc)}, sort_keys=True)


def run(argv=None, stdout=None, stderr=None) -> int:
    """Execute the command line ``argv`` and return the exit code."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        with contextlib.redirect_stdout(stdout):
            args = parser.parse_args(argv)
    except _UsageError as exc:
        print(_error("UsageError", exc), file=stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        from .sim import set_threads

        set_threads(args.threads)
        out, code = args.func(args)
    except CapacityError as exc:
        print(_error(type(exc).__name__, exc), file=stderr)
        return EXIT_CAPACITY
    except (InvalidInputError, ValueError) as exc:
        print(_error(type(exc).__name__, exc), file=stderr)
        return EXIT_INVALID
    except (CalibrationError, LinearCreditError) as exc:
        print(_error(type(exc).__name__, exc), file=stderr)
        return EXIT_FAILURE
    print(dumps(out), file=stdout)
    return code


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":  # pragma: no cover
    main()
