"""Command-line front end.

Subcommands: simulate, calibrate, infer-restarts, price, evaluate,
implied-vol, emit-plots.  Stochastic subcommands require --seed and are
byte-reproducible; every artifact embeds a header comment with the
config hash and seed.  Exit codes: 2 usage, 3 data errors, 4 numeric
failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import date
from pathlib import Path

import numpy as np
import pandas as pd

from . import io
from .calibration import CalibrationGrid, calibrate_scale, calibrate_shape
from .market import (bucket_and_report, dividend_adjusted_index,
                     filter_chain, select_rate)
from .mixture import build_sigma_mixture, prior_sigma_grid
from .model import simulate_returns
from .params import (ContractSpec, DataError, InferenceConfig, ModelParams,
                     NumericError, PricingConfig, TRADING_DAYS_PER_YEAR)
from .pricing import (NoImpliedVolError, bs_implied_vol, bs_price,
                      prepare_pricing, price_with_components)
from .restarts import sample_past_restarts

SCALE_WINDOW = 252


def per_step_rate(annual: float) -> float:
    """Per-step rate from an annualized quote: (1+r)^(1/252) - 1."""
    return (1.0 + annual) ** (1.0 / TRADING_DAYS_PER_YEAR) - 1.0


def _load_params(args, require_all: bool = True) -> ModelParams:
    values = {}
    if getattr(args, "params", None):
        cfg = io.read_config(args.params)
        for key in ("d", "nu", "alpha", "beta", "mu"):
            if key in cfg:
                values[key] = float(cfg[key])
        if "m" in cfg:
            values["m"] = int(float(cfg["m"]))
    for key in ("d", "nu", "alpha", "beta", "mu"):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if getattr(args, "m", None) is not None:
        values["m"] = args.m
    missing = {"d", "nu", "alpha", "beta"} - set(values)
    if missing and require_all:
        raise DataError(f"model parameters missing: {sorted(missing)}")
    values.setdefault("mu", 0.0)
    values.setdefault("m", 21)
    return ModelParams(r=getattr(args, "r_step", 0.0) or 0.0, **values)


def _meta(args, extra=None) -> dict:
    config = {k: v for k, v in vars(args).items()
              if k not in ("func", "out", "out_dir") and v is not None}
    meta = {"config_hash": io.config_hash({k: str(v) for k, v in config.items()}),
            "seed": getattr(args, "seed", "none")}
    if extra:
        meta.update(extra)
    return meta


def _pricing_config(args) -> PricingConfig:
    return PricingConfig(
        inference=InferenceConfig(tau=args.tau, n_mc=args.n_mc),
        n_real=args.n_real, n_sigma=args.n_sigma,
        max_restarts=args.max_restarts,
        fixed_sigma=getattr(args, "fixed_sigma", None))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    params = _load_params(args)
    path = simulate_returns(params, args.days, args.seed)
    df = pd.DataFrame({"t": path.t, "i_state": path.states,
                       "a_coeff": path.a, "y": path.y, "x": path.x})
    io.write_dataframe(args.out, df, _meta(args))
    return 0


def cmd_calibrate(args) -> int:
    series = io.read_return_series(args.returns)
    x = series.returns
    if args.start or args.end:
        lo = 0 if not args.start else next(
            i for i, d in enumerate(series.dates)
            if d >= date.fromisoformat(args.start))
        hi = len(x) if not args.end else sum(
            1 for d in series.dates if d <= date.fromisoformat(args.end))
        x = x[lo:hi]
    grid = CalibrationGrid.regular(
        d_range=tuple(args.grid_d[:2]), nu_range=tuple(args.grid_nu[:2]),
        alpha_range=tuple(args.grid_alpha[:2]), d_step=args.grid_d[2],
        nu_step=args.grid_nu[2], alpha_step=args.grid_alpha[2])
    shape = calibrate_shape(x, grid, m=args.m, mc_budget=args.mc_budget,
                            rng_seed=args.seed)
    window = x[-min(SCALE_WINDOW, len(x)):]
    scale = calibrate_scale(window, d=shape.d, nu=shape.nu, alpha=shape.alpha,
                            m=args.m, rng_seed=args.seed)
    result = {"d": shape.d, "nu": shape.nu, "alpha": shape.alpha,
              "beta": scale.beta, "sigma_bs": scale.sigma_bs,
              "mu": scale.mu, "m": args.m, "objective": shape.objective,
              "nu_flat": shape.diagnostics["nu_flat"]}
    io.write_config(args.out, result, _meta(args))
    return 0


def cmd_infer_restarts(args) -> int:
    series = io.read_return_series(args.returns)
    params = _load_params(args)
    t0 = args.t0 if args.t0 is not None else len(series.returns)
    cfg = InferenceConfig(tau=args.tau, n_mc=args.n_mc)
    paths = sample_past_restarts(series.returns, t0, params, cfg, args.seed)
    rows = []
    for k, p in enumerate(paths):
        for t, state in zip(range(p.t_start, p.t_end + 1), p.states):
            rows.append((k, t, int(state), p.weight))
    df = pd.DataFrame(rows, columns=["sample_idx", "t", "i_state", "weight"])
    io.write_dataframe(args.out, df, _meta(args))
    return 0


def _contract_rate(args, rates, quote_date, dtm):
    if rates is not None:
        return select_rate(quote_date, dtm, rates)
    return args.r_annual or 0.0


def cmd_price(args) -> int:
    series = io.read_return_series(args.returns)
    params = _load_params(args)
    contracts = io.read_contracts(args.contracts)
    calendar = io.read_calendar(args.calendar)
    rates = (io.read_rates(args.rates, args.allow_negative_rates)
             if args.rates else None)
    cfg_file = io.read_config(args.params) if args.params else {}
    sigma_bs = (args.sigma_bs if args.sigma_bs is not None
                else float(cfg_file.get("sigma_bs", "nan")))

    quote_dates = sorted(set(contracts["quote_date"]))
    out_rows = []
    for q_date in quote_dates:
        group = contracts[contracts["quote_date"] == q_date]
        last_known = max(d for d in series.dates if d < q_date)
        t0 = sum(1 for d in series.dates if d <= last_known)
        dtms = [calendar.days_to_maturity(q_date, e) for e in group["expiry"]]
        n_steps = [d + 1 for d in dtms]
        rates_ann = [_contract_rate(args, rates, q_date, d) for d in dtms]
        cfg = _pricing_config(args)
        degenerate = cfg.fixed_sigma is not None and params.d == 0.5
        base_comps = None
        if not degenerate:
            # components do not depend on the rate, so one preparation
            # serves every contract of the quote date
            base_comps = prepare_pricing(series.returns, t0, params, cfg,
                                         args.seed,
                                         max_horizon=max(n_steps) - 1)

        def one(row_dtm_r):
            row, n, r_ann = row_dtm_r
            r_step = per_step_rate(r_ann)
            p = params.replace(r=r_step)
            contract = ContractSpec(strike=row.strike, t0=t0,
                                    maturity=t0 + n - 1, s_prev=row.S_prev)
            if degenerate:
                from .pricing import price_option
                res = price_option(contract, series.returns, p, cfg, args.seed)
            else:
                comps = dataclasses.replace(base_comps, params=p)
                res = price_with_components(contract, comps)
            bsp = (bs_price(contract, sigma_bs, r_step)
                   if math.isfinite(sigma_bs) else float("nan"))
            try:
                iv_model = bs_implied_vol(contract, res.price, r_step)
            except NoImpliedVolError:
                iv_model = float("nan")
            iv_market = float("nan")
            market = getattr(row, "market_price", None)
            if market is not None and not pd.isna(market):
                try:
                    iv_market = bs_implied_vol(contract, float(market), r_step)
                except NoImpliedVolError:
                    pass
            return {"strike": row.strike, "expiry": row.expiry.isoformat(),
                    "model_price": res.price, "delta": res.delta,
                    "bs_price": bsp, "implied_vol_model": iv_model,
                    "implied_vol_market": iv_market}

        tasks = list(zip(group.itertuples(index=False), n_steps, rates_ann))
        if args.threads > 1:
            with ThreadPoolExecutor(max_workers=args.threads) as pool:
                out_rows.extend(pool.map(one, tasks))
        else:
            out_rows.extend(map(one, tasks))
    io.write_dataframe(args.out, pd.DataFrame(out_rows), _meta(args))
    return 0


def cmd_evaluate(args) -> int:
    series = io.read_return_series(args.returns)
    params = _load_params(args)
    chain = io.read_option_chain(args.chain)
    calendar = io.read_calendar(args.calendar)
    rates = io.read_rates(args.rates, args.allow_negative_rates)
    cfg_file = io.read_config(args.params) if args.params else {}
    sigma_bs = (args.sigma_bs if args.sigma_bs is not None
                else float(cfg_file.get("sigma_bs", "nan")))
    if not math.isfinite(sigma_bs):
        raise DataError("sigma_bs needed: flag --sigma-bs or params file")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    kept, rejected = filter_chain(chain, calendar)
    # dividend adjustment and rates per (quote date, expiry)
    kept = kept.copy()
    kept["rate_annual"] = np.nan
    kept["s_adj"] = np.nan
    for (q, e), block in kept.groupby(["quote_date", "expiry"]):
        dtm = int(block["dtm"].iloc[0])
        r_ann = select_rate(q, dtm, rates)
        level = float(block["underlying_close"].iloc[0])
        s_adj, info = dividend_adjusted_index(block, level, r_ann, dtm)
        kept.loc[block.index, "rate_annual"] = r_ann
        kept.loc[block.index, "s_adj"] = s_adj
    kept, rejected2 = filter_chain(kept, calendar)
    rejected = pd.concat([rejected, rejected2], ignore_index=True)
    io.write_dataframe(out_dir / "rejections.csv", rejected, _meta(args))

    calls = kept[kept["cp_flag"].astype(str).str.upper().str.startswith("C")]
    records = []
    for q_date, group in calls.groupby("quote_date"):
        last_known = [d for d in series.dates if d < q_date]
        if len(last_known) < params.m + args.tau:
            raise DataError(f"history too short before {q_date}")
        t0 = len(last_known)
        cfg = _pricing_config(args)
        base_comps = prepare_pricing(series.returns[:t0], t0, params, cfg,
                                     args.seed,
                                     max_horizon=int(group["dtm"].max()))
        for row in group.itertuples(index=False):
            n = int(row.dtm) + 1
            r_step = per_step_rate(float(row.rate_annual))
            p = params.replace(r=r_step)
            contract = ContractSpec(strike=float(row.strike), t0=t0,
                                    maturity=t0 + n - 1,
                                    s_prev=float(row.s_adj))
            res = price_with_components(
                contract, dataclasses.replace(base_comps, params=p))
            bsp = bs_price(contract, sigma_bs, r_step)
            try:
                ivk = bs_implied_vol(contract, float(row.price), r_step)
            except NoImpliedVolError:
                ivk = float("nan")
            try:
                ivm = bs_implied_vol(contract, res.price, r_step)
            except NoImpliedVolError:
                ivm = float("nan")
            records.append({
                "quote_date": q_date, "expiry": row.expiry,
                "strike": row.strike, "dtm": row.dtm,
                "moneyness": row.moneyness, "market_price": row.price,
                "model_price": res.price, "bs_price": bsp,
                "iv_market": ivk, "iv_model": ivm})
    rec = pd.DataFrame(records)
    report = bucket_and_report(rec)
    meta = _meta(args)
    io.write_dataframe(out_dir / "report_counts.csv",
                       report.counts.reset_index(names="moneyness"), meta)
    io.write_dataframe(out_dir / "report_avg_price.csv",
                       report.avg_price.reset_index(names="moneyness"), meta)
    io.write_dataframe(out_dir / "report_avg_iv.csv",
                       report.avg_implied_vol.reset_index(names="moneyness"),
                       meta)
    io.write_dataframe(out_dir / "report_rmse_model.csv",
                       report.rmse_model.reset_index(names="moneyness"), meta)
    io.write_dataframe(out_dir / "report_rmse_bs.csv",
                       report.rmse_bs.reset_index(names="moneyness"), meta)

    mse = (rec.assign(se_model=(rec.model_price - rec.market_price) ** 2,
                      se_bs=(rec.bs_price - rec.market_price) ** 2)
           .groupby("expiry")[["se_model", "se_bs"]].mean().reset_index()
           .rename(columns={"se_model": "mse_model", "se_bs": "mse_bs"}))
    io.write_dataframe(out_dir / "mse_by_maturity.csv", mse, meta)

    smile = rec[["strike", "iv_model", "iv_market"]].rename(
        columns={"iv_model": "implied_vol_model",
                 "iv_market": "implied_vol_market"}).sort_values("strike")
    io.write_dataframe(out_dir / "smile.csv", smile, meta)
    return 0


def cmd_implied_vol(args) -> int:
    contract = ContractSpec(strike=args.strike, t0=1, maturity=args.steps,
                            s_prev=args.s_prev)
    r_step = per_step_rate(args.r_annual)
    vol = bs_implied_vol(contract, args.price, r_step)
    annual = vol * math.sqrt(TRADING_DAYS_PER_YEAR)
    print(f"implied_vol_per_step={vol:.10f}")
    print(f"implied_vol_annualized={annual:.10f}")
    return 0


def cmd_emit_plots(args) -> int:
    series = io.read_return_series(args.returns)
    params = _load_params(args)
    t0 = args.t0 if args.t0 is not None else len(series.returns)
    cfg = InferenceConfig(tau=args.tau, n_mc=1)
    path = sample_past_restarts(series.returns, t0, params, cfg,
                                args.seed)[0]
    from .params import RestartPath
    from .restarts import scenario_states
    future = scenario_states(path.state_at(t0 - 1), args.maturity_steps, ())
    full = RestartPath(t_start=t0 - params.m, t_end=t0 + args.maturity_steps - 1,
                       states=np.concatenate([path.states, future]))
    mix = build_sigma_mixture(series.returns[t0 - params.m:t0], full, t0,
                              t0 + args.maturity_steps - 1, params,
                              n_real=args.n_real, rng_seed=args.seed)
    grid = prior_sigma_grid(params)
    df = pd.DataFrame({"sigma": grid, "density": mix.grid(grid)})
    io.write_dataframe(args.out, df, _meta(args))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_param_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--params", help="key-value parameter file")
    p.add_argument("--d", type=float)
    p.add_argument("--nu", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--m", type=int)


def _add_pricing_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau", type=int, default=3)
    p.add_argument("--n-mc", dest="n_mc", type=int, default=20)
    p.add_argument("--n-real", dest="n_real", type=int, default=100)
    p.add_argument("--n-sigma", dest="n_sigma", type=int, default=512)
    p.add_argument("--max-restarts", dest="max_restarts", type=int, default=2)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--allow-negative-rates", dest="allow_negative_rates",
                   action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarchpricer",
        description="Switching-volatility return model and option pricer")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a model path to CSV")
    p.add_argument("--days", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    _add_param_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="fit parameters on a return series")
    p.add_argument("--returns", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--start")
    p.add_argument("--end")
    p.add_argument("--m", type=int, default=21)
    p.add_argument("--mc-budget", dest="mc_budget", type=int, default=200)
    p.add_argument("--grid-d", dest="grid_d", type=float, nargs=3,
                   default=[0.1, 0.35, 5e-3], metavar=("LO", "HI", "STEP"))
    p.add_argument("--grid-nu", dest="grid_nu", type=float, nargs=3,
                   default=[1e-4, 1e-3, 1e-4], metavar=("LO", "HI", "STEP"))
    p.add_argument("--grid-alpha", dest="grid_alpha", type=float, nargs=3,
                   default=[3.0, 10.0, 0.5], metavar=("LO", "HI", "STEP"))
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("infer-restarts", help="sample past restart states")
    p.add_argument("--returns", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--t0", type=int)
    p.add_argument("--tau", type=int, default=3)
    p.add_argument("--n-mc", dest="n_mc", type=int, default=20)
    _add_param_flags(p)
    p.set_defaults(func=cmd_infer_restarts)

    p = sub.add_parser("price", help="price a contract list")
    p.add_argument("--contracts", required=True)
    p.add_argument("--returns", required=True)
    p.add_argument("--calendar", required=True)
    p.add_argument("--rates")
    p.add_argument("--r-annual", dest="r_annual", type=float)
    p.add_argument("--sigma-bs", dest="sigma_bs", type=float)
    p.add_argument("--fixed-sigma", dest="fixed_sigma", type=float)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    _add_param_flags(p)
    _add_pricing_flags(p)
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("evaluate", help="evaluate pricers against a chain")
    p.add_argument("--chain", required=True)
    p.add_argument("--returns", required=True)
    p.add_argument("--rates", required=True)
    p.add_argument("--calendar", required=True)
    p.add_argument("--sigma-bs", dest="sigma_bs", type=float)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    _add_param_flags(p)
    _add_pricing_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("implied-vol", help="invert the benchmark price")
    p.add_argument("--price", type=float, required=True)
    p.add_argument("--strike", type=float, required=True)
    p.add_argument("--s-prev", dest="s_prev", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--r-annual", dest="r_annual", type=float, default=0.0)
    p.set_defaults(func=cmd_implied_vol)

    p = sub.add_parser("emit-plots", help="mixing-density curve to CSV")
    p.add_argument("--returns", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--t0", type=int)
    p.add_argument("--maturity-steps", dest="maturity_steps", type=int,
                   default=21)
    p.add_argument("--tau", type=int, default=3)
    p.add_argument("--n-real", dest="n_real", type=int, default=100)
    _add_param_flags(p)
    p.set_defaults(func=cmd_emit_plots)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return 3
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error: numeric: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
