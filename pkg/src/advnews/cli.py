"""Command-line entry point: ``advnews {backtest,attack,sweep,sanitize,report,fixtures}``."""

from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import hashlib
import html
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__, kernel
from .adversary import CONCEALMENT_STYLES, DEFAULT_PAYLOAD, KINDS, AttackSpec, normalize_kind
from .engine import ConfigError, CostConfig, MarketFrame, StrategyParams
from .evaluator import (CSV_FIELDS, Experiment, aggregate, paired_run, read_records,
                        render_summary, sweep, write_effects, write_records)
from .forecaster import (ForecasterConfig, LSTMForecaster, PersistenceForecaster, price_signals,
                         train)
from .homoglyphs import TABLE_ROWS, table_for
from .market_data import Portfolio, build_calendar, load_prices_dir, parse_date
from .news import HeadlineStore, Lexicon, NewsAnalyzer
from .sanitizer import extract_visible_text, sanitize

log = logging.getLogger("advnews")


@dataclass
class RunConfig:
    prices: str | None = None
    headlines: str | None = None
    lexicon: str | None = None
    out: str = "out"
    tickers: list[str] = field(default_factory=list)
    aliases: dict = field(default_factory=dict)
    start: str | None = None
    end: str | None = None
    forecaster: str = "persistence"
    forecaster_config: dict = field(default_factory=dict)
    sentiment: str = "lexicon"
    assoc: str = "rule"
    remote: dict = field(default_factory=dict)
    seed: int = 42
    jobs: int = 1
    sanitize: bool = False
    color_match: bool = False
    homoglyph_rows: str = "default"
    smoothing: dict = field(default_factory=lambda: {"window": 7, "fill": "skip"})
    strategy: dict = field(default_factory=dict)
    costs: dict = field(default_factory=dict)
    attack: dict = field(default_factory=dict)
    kinds: list[str] = field(default_factory=lambda: list(KINDS))

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "RunConfig":
        obj: dict = {}
        base = Path.cwd()
        if path:
            p = Path(path)
            try:
                obj = json.loads(p.read_text(encoding="utf-8"))
            except FileNotFoundError:
                raise ConfigError(f"config file not found: {path}") from None
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
            base = p.resolve().parent
        unknown = sorted(set(obj) - set(cls.__dataclass_fields__))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        # relative paths in the file are relative to the file
        for key in ("prices", "headlines", "lexicon"):
            if obj.get(key):
                obj[key] = str((base / obj[key]))
        obj.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls(**obj)

    def problems(self) -> list[str]:
        out = []
        if not self.prices:
            out.append("prices: a prices directory is required")
        elif not Path(self.prices).is_dir():
            out.append(f"prices: directory not found: {self.prices}")
        if self.headlines and not Path(self.headlines).is_file():
            out.append(f"headlines: file not found: {self.headlines}")
        if self.lexicon and not Path(self.lexicon).is_file():
            out.append(f"lexicon: file not found: {self.lexicon}")
        dates = {}
        for key in ("start", "end"):
            v = getattr(self, key)
            if v is not None:
                try:
                    dates[key] = parse_date(v)
                except ValueError:
                    out.append(f"{key}: not an ISO date: {v!r}")
        if "start" in dates and "end" in dates and dates["start"] > dates["end"]:
            out.append("start must not be after end")
        if self.forecaster not in ("lstm", "persistence"):
            out.append(f"forecaster: expected lstm or persistence, got {self.forecaster!r}")
        if self.sentiment not in ("lexicon", "remote"):
            out.append(f"sentiment: expected lexicon or remote, got {self.sentiment!r}")
        if self.assoc not in ("rule", "remote"):
            out.append(f"assoc: expected rule or remote, got {self.assoc!r}")
        if self.homoglyph_rows not in TABLE_ROWS:
            out.append(f"homoglyph_rows: expected one of {', '.join(TABLE_ROWS)}, "
                       f"got {self.homoglyph_rows!r}")
        if not isinstance(self.jobs, int) or self.jobs < 1:
            out.append("jobs must be a positive integer")
        if self.smoothing.get("fill", "skip") not in ("skip", "zero"):
            out.append(f"smoothing.fill: expected skip or zero, got {self.smoothing.get('fill')!r}")
        if int(self.smoothing.get("window", 7)) < 1:
            out.append("smoothing.window must be >= 1")
        for k in self.kinds:
            try:
                normalize_kind(k)
            except ValueError as exc:
                out.append(f"kinds: {exc}")
        if self.attack.get("concealment", "display_none") not in CONCEALMENT_STYLES:
            out.append(f"attack.concealment: unknown style {self.attack.get('concealment')!r}")
        for name, ctor in (("strategy", StrategyParams.from_dict), ("costs", CostConfig.from_dict),
                           ("forecaster_config", ForecasterConfig.from_dict)):
            try:
                ctor(getattr(self, name))
            except (ValueError, TypeError) as exc:
                out.extend(f"{name}: {p}" for p in str(exc).split("; "))
        return out

    def validate(self) -> "RunConfig":
        problems = self.problems()
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(cfg: RunConfig, out: Path, command: str, extra: dict | None = None) -> None:
    inputs = {}
    if cfg.prices and Path(cfg.prices).is_dir():
        for p in sorted(Path(cfg.prices).glob("*.csv")):
            inputs[str(p)] = sha256_file(p)
    for p in (cfg.headlines, cfg.lexicon):
        if p:
            inputs[str(p)] = sha256_file(p)
    manifest = {
        "command": command,
        "version": __version__,
        "kernel": kernel.BACKEND,
        "config_sha256": cfg.digest(),
        "config": cfg.to_dict(),
        "inputs": inputs,
        **(extra or {}),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")


def _remote_client(cfg: RunConfig):
    if "remote" not in (cfg.sentiment, cfg.assoc):
        return None
    from .remote import EndpointConfig, RemoteClient
    return RemoteClient(EndpointConfig.from_dict(cfg.remote))


def build_experiment(cfg: RunConfig, out: Path | None = None) -> Experiment:
    """Load data, fit forecasters and wire the news pipeline for one run."""
    series = load_prices_dir(cfg.prices, cfg.tickers or None)
    tickers = tuple(cfg.tickers or series)
    missing = [t for t in tickers if t not in series]
    if missing:
        raise ConfigError(f"no price file for: {', '.join(missing)}")
    start = parse_date(cfg.start) if cfg.start else None
    end = parse_date(cfg.end) if cfg.end else None
    calendar = build_calendar([series[t] for t in tickers], start, end)
    market = MarketFrame.from_series(series, tickers, calendar)

    if cfg.forecaster == "lstm":
        fcfg = ForecasterConfig.from_dict({"seed": cfg.seed, **cfg.forecaster_config})
        first = calendar.dates[0]
        forecasters = {}
        for t in tickers:
            hist = series[t].upto(first - dt.timedelta(days=1))
            model = train(hist, fcfg)
            if out is not None:
                (out / "models").mkdir(parents=True, exist_ok=True)
                model.save(out / "models" / f"{t}.json")
            forecasters[t] = LSTMForecaster(model)
    else:
        forecasters = {t: PersistenceForecaster() for t in tickers}
    delta = price_signals(forecasters, series, tickers, calendar)

    store = HeadlineStore.load_jsonl(cfg.headlines) if cfg.headlines else HeadlineStore([])
    portfolio = Portfolio.default(tickers) if not cfg.aliases else Portfolio(
        tickers, {t: tuple(a) for t, a in cfg.aliases.items()})
    lexicon = Lexicon.load(cfg.lexicon) if cfg.sentiment == "lexicon" else None
    table = table_for(cfg.homoglyph_rows)
    analyzer = NewsAnalyzer(portfolio, lexicon, cfg.assoc, cfg.sentiment, cfg.sanitize,
                            table, cfg.color_match, _remote_client(cfg))
    return Experiment(
        market, delta, store, portfolio, analyzer,
        StrategyParams.from_dict(cfg.strategy), CostConfig.from_dict(cfg.costs),
        int(cfg.smoothing.get("window", 7)), cfg.smoothing.get("fill", "skip"),
        table=table,
        payload=cfg.attack.get("payload", DEFAULT_PAYLOAD),
        concealment=cfg.attack.get("concealment", "display_none"),
    )


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _warn_dropped(result) -> None:
    if result.dropped_orders:
        log.warning("%d order(s) dropped for missing open prices", result.dropped_orders)


def cmd_backtest(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    exp = build_experiment(cfg, out)
    result = exp.clean().result
    _warn_dropped(result)
    result.write(out)
    write_manifest(cfg, out, "backtest")
    print(json.dumps({"cr": result.cr, "final_equity": result.final_equity, "out": str(out)}))
    return 0


def _attack_spec(cfg: RunConfig, args) -> AttackSpec:
    kind = args.kind or cfg.attack.get("kind")
    ticker = args.ticker or cfg.attack.get("ticker")
    date = args.date or cfg.attack.get("date")
    problems = [f"attack: {k} is required" for k, v in
                (("kind", kind), ("ticker", ticker), ("date", date)) if not v]
    if problems:
        raise ConfigError("; ".join(problems))
    return AttackSpec(kind, ticker, parse_date(date))


def cmd_attack(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    spec = _attack_spec(cfg, args)
    exp = build_experiment(cfg, out)
    spec.validate(exp.portfolio, exp.market.calendar)
    applied = exp.apply(spec)
    applied.store.dump_jsonl(out / "attacked_headlines.jsonl")
    rec = paired_run(spec, exp)
    clean = exp.clean()
    diff = []
    for i in applied.touched:
        before, after = exp.store[i], applied.store[i]
        diff.append({
            "id": before.id,
            "attacked_id": after.id,
            "raw_before": before.raw_html,
            "raw_after": after.raw_html,
            "visible_before": extract_visible_text(before.raw_html)[0],
            "visible_after": extract_visible_text(after.raw_html)[0],
            "changed": before.raw_html != after.raw_html,
        })
    effects = [{"id": e.headline_id, "clean_ticker": e.clean_ticker, "attacked_ticker": e.attacked_ticker,
                "clean_polarity": e.clean_polarity, "attacked_polarity": e.attacked_polarity}
               for e in rec.effects]
    report = {"spec": json.loads(spec.to_json()), "headlines": diff, "effects": effects,
              "record": {k: (getattr(rec, k).isoformat() if k == "date" else getattr(rec, k))
                         for k in CSV_FIELDS}}
    (out / "attack_report.json").write_text(json.dumps(report, indent=2, ensure_ascii=False) + "\n",
                                            encoding="utf-8")
    clean.result.write(out / "clean")
    rec.attacked_result.write(out / "attacked")
    _warn_dropped(rec.attacked_result)
    write_manifest(cfg, out, "attack", {"spec": json.loads(spec.to_json())})
    print(json.dumps({"touched": rec.headlines_touched, "action_flip": rec.action_flip,
                      "delta_cr": rec.delta_cr, "dollar_impact": rec.dollar_impact}))
    return 0


def write_curve_pair(path: Path, dates, clean, attacked) -> None:
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("date,clean,attacked\n")
        for d, c, a in zip(dates, clean, attacked):
            fh.write(f"{d.isoformat()},{float(c)!r},{float(a)!r}\n")


def write_points(records, path: Path) -> None:
    """Plot-ready scatter of successful records: one row per (kind, target)."""
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("kind,ticker,date,headlines_touched,action_flip,delta_cr,dollar_impact\n")
        for r in records:
            if r.ok:
                fh.write(f"{r.kind},{r.ticker},{r.date.isoformat()},{r.headlines_touched},"
                         f"{str(r.action_flip).lower()},{float(r.delta_cr)!r},"
                         f"{float(r.dollar_impact)!r}\n")


def cmd_sweep(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    if args.kinds:
        cfg.kinds = list(KINDS) if args.kinds == "both" else [normalize_kind(args.kinds)]
    exp = build_experiment(cfg, out)
    plan = exp.plan(cfg.kinds)
    log.info("sweeping %d targets x %d kinds", len(plan.targets), len(plan.kinds))
    records = sweep(plan, exp, jobs=cfg.jobs)
    write_records(records, out / "records.csv")
    write_effects(records, out / "headline_effects.csv")
    report = aggregate(records)
    report["clean_cr"] = exp.clean().result.cr
    (out / "summary.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    (out / "summary.txt").write_text(render_summary(report), encoding="utf-8")
    curves = out / "curves"
    curves.mkdir(exist_ok=True)
    write_points(records, curves / "delta_cr_points.csv")
    clean_eq = exp.clean().result.equity
    for kind, stats in report["kinds"].items():
        for which in ("worst", "best"):
            if which not in stats:
                continue
            case = stats[which]
            rec = next(r for r in records if r.kind == kind and r.ok and r.ticker == case["ticker"]
                       and r.date.isoformat() == case["date"])
            write_curve_pair(curves / f"{kind}_{which}_{rec.ticker}_{rec.date}.csv",
                             exp.market.dates, clean_eq, rec.attacked_equity)
    write_manifest(cfg, out, "sweep", {"n_records": len(records)})
    sys.stdout.write(render_summary(report))
    return 0


def _sanitize_paths(cfg: RunConfig, args) -> tuple[Path, Path]:
    """``--out`` may name the cleaned JSONL itself or a directory for it."""
    if args.out_file:
        out_path = Path(args.out_file)
    elif args.out and Path(args.out).suffix:
        out_path = Path(args.out)
    else:
        out_path = Path(cfg.out) / "sanitized.jsonl"
    rep_path = Path(args.report) if args.report else out_path.with_name(out_path.stem + "_report.json")
    return out_path, rep_path


def cmd_sanitize(cfg: RunConfig, args) -> int:
    src = args.inp or cfg.headlines
    if not src:
        raise ConfigError("sanitize: --in (or headlines in the config) is required")
    if cfg.homoglyph_rows not in TABLE_ROWS:
        raise ConfigError(f"homoglyph_rows: expected one of {', '.join(TABLE_ROWS)}")
    table = table_for(cfg.homoglyph_rows)
    store = HeadlineStore.load_jsonl(src)
    cleaned, reports = [], []
    for h in store:
        text, rep = sanitize(h, table, color_match=cfg.color_match)
        cleaned.append(dataclasses.replace(h, raw_html=html.escape(text, quote=False) or " "))
        reports.append({"id": h.id, **rep.to_dict()})
    out_path, rep_path = _sanitize_paths(cfg, args)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    rep_path.parent.mkdir(parents=True, exist_ok=True)
    HeadlineStore(cleaned).dump_jsonl(out_path)
    totals = {
        "headlines": len(reports),
        "suspicious": sum(r["suspicious"] for r in reports),
        "hidden_elements_removed": sum(r["hidden_elements_removed"] for r in reports),
        "homoglyphs_normalized": sum(r["homoglyphs_normalized"] for r in reports),
        "max_elapsed": max((r["elapsed"] for r in reports), default=0.0),
    }
    rep_path.write_text(json.dumps({"totals": totals, "headlines": reports}, indent=2) + "\n",
                        encoding="utf-8")
    print(json.dumps({**totals, "out": str(out_path), "report": str(rep_path)}))
    return 0


def cmd_report(cfg: RunConfig, args) -> int:
    records = read_records(args.records)
    report = aggregate(records)
    text = render_summary(report)
    if args.out:
        out = _out_dir(cfg)
        (out / "summary.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
        (out / "summary.txt").write_text(text, encoding="utf-8")
        write_points(records, out / "delta_cr_points.csv")
    sys.stdout.write(text)
    return 0


def cmd_fixtures(cfg: RunConfig, args) -> int:
    from .fixtures import write_bundle
    out = write_bundle(args.out or "fixtures")
    print(json.dumps({"out": str(out)}))
    return 0


COMMANDS = {
    "backtest": cmd_backtest,
    "attack": cmd_attack,
    "sweep": cmd_sweep,
    "sanitize": cmd_sanitize,
    "report": cmd_report,
    "fixtures": cmd_fixtures,
}
# commands that only need a subset of the run config
_LIGHT = {"sanitize", "report", "fixtures"}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config JSON")
    common.add_argument("--prices", help="directory of <TICKER>.csv files")
    common.add_argument("--headlines", help="headline JSONL file")
    common.add_argument("--lexicon", help="lexicon JSON file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int)
    common.add_argument("--sanitize", action="store_true", default=None,
                        help="sanitize headlines before scoring")
    common.add_argument("--forecaster", choices=("lstm", "persistence"))
    common.add_argument("--sentiment", choices=("lexicon", "remote"))
    common.add_argument("--assoc", choices=("rule", "remote"))
    common.add_argument("--start")
    common.add_argument("--end")
    common.add_argument("--tickers", type=lambda s: [t.strip() for t in s.split(",") if t.strip()])
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(
        prog="advnews",
        description="Backtest a news-driven trading strategy and measure how adversarial "
                    "headlines move it.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("backtest", parents=[common], help="run the clean backtest")
    a = sub.add_parser("attack", parents=[common], help="attack one (day, stock) and compare")
    a.add_argument("--kind", choices=("homoglyph", "hidden-text", "hidden_text"))
    a.add_argument("--ticker")
    a.add_argument("--date")
    s = sub.add_parser("sweep", parents=[common], help="attack every (day, stock) with news")
    s.add_argument("--kinds", choices=("homoglyph", "hidden-text", "both"))
    z = sub.add_parser("sanitize", parents=[common], help="sanitize a headline store")
    z.add_argument("--in", dest="inp")
    z.add_argument("--out-file", dest="out_file", help="sanitized JSONL path")
    z.add_argument("--report", help="detection report JSONL path")
    r = sub.add_parser("report", parents=[common], help="summarize a records CSV")
    r.add_argument("--records", required=True)
    sub.add_parser("fixtures", parents=[common], help="write the synthetic bundle")
    return p


def _error(kind: str, message: str, code: int) -> int:
    problems = message.split("; ") if kind == "ConfigError" else [message]
    sys.stderr.write(json.dumps({"error": kind, "message": message, "problems": problems}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    overrides = {k: getattr(args, k) for k in
                 ("prices", "headlines", "lexicon", "out", "seed", "jobs", "sanitize",
                  "forecaster", "sentiment", "assoc", "start", "end", "tickers")}
    try:
        cfg = RunConfig.load(args.config, overrides)
        if args.command not in _LIGHT:
            cfg.validate()
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        return _error("ConfigError", str(exc), 2)
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        log.debug("failure", exc_info=True)
        return _error(type(exc).__name__, str(exc), 1)


if __name__ == "__main__":
    sys.exit(main())
