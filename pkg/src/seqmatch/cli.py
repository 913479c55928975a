"""Command-line entry point: ``seqmatch <command> ...``.

Every command exits 0 on success. On failure it prints one line
``error: <kind>: <message>`` to stderr and exits with status 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__

log = logging.getLogger("seqmatch")


class CliError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


def _resolve(path, sub: str, filename: str) -> Path:
    """Accept either the prepare output root, its sub-directory, or the file itself."""
    p = Path(path)
    for cand in (p / sub / filename, p / filename, p):
        if cand.is_file():
            return cand
    raise CliError("missing_file", f"no {filename} under {path}")


def _write_json(obj, out) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")


def _load_ckpt(path):
    from .training.checkpoint import load_checkpoint

    if not Path(path).is_file():
        raise CliError("missing_file", f"checkpoint {path} not found")
    return load_checkpoint(path)


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise CliError("missing_file", f"{path} not found") from None
    except json.JSONDecodeError as exc:
        raise CliError("bad_json", f"{path}: {exc}") from None


# -- commands ---------------------------------------------------------------


def cmd_generate(args) -> int:
    from .data.synthetic import SyntheticConfig, write_synthetic

    cfg = SyntheticConfig(
        scenario=args.scenario,
        n_users=args.users,
        n_items=args.items,
        events_per_user=args.events_per_user,
        test_session_len=args.test_session_len,
        n_clusters=args.clusters,
        noise_rate=args.noise,
        seed=args.seed,
    )
    manifest = write_synthetic(cfg, args.out)
    print(json.dumps({"events": manifest["n_records"], "out": str(args.out)}))
    return 0


def cmd_prepare(args) -> int:
    from .data.prepare import PrepareConfig, prepare

    if not Path(args.input).is_file():
        raise CliError("missing_file", f"input {args.input} not found")
    cfg = PrepareConfig(
        gap_seconds=args.gap_seconds,
        max_session_len=args.max_session_len,
        lookback_days=args.lookback_days,
        longterm_cap=args.longterm_cap,
        min_item_count=args.min_item_count,
        spam_threshold=args.spam_threshold,
        test_prefix=args.test_prefix,
        test_days=args.test_days,
    )
    stats = prepare(args.input, args.output, cfg)
    print(json.dumps(stats, sort_keys=True))
    return 0


def cmd_train(args) -> int:
    from .config import TrainingConfig, apply_env, load_config
    from .data.events import load_train_histories
    from .training import save_checkpoint, train

    histories = load_train_histories(_resolve(args.data, "train", "histories.jsonl"))
    if args.config:
        if not Path(args.config).is_file():
            raise CliError("missing_file", f"config {args.config} not found")
        try:
            cfg = load_config(args.config)
        except ValueError as exc:
            raise CliError("bad_config", str(exc)) from None
    else:
        cfg = apply_env(TrainingConfig())
    metrics_path = Path(args.metrics) if args.metrics else Path(str(args.out) + ".metrics.jsonl")
    metrics_path.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    with open(metrics_path, "w", encoding="utf-8") as fh:

        def log_epoch(entry):
            entries.append(entry)
            fh.write(json.dumps(entry) + "\n")
            fh.flush()
            log.info("epoch %d loss %.5f (%.0f ms)", entry["epoch"], entry["loss"], entry["wall_ms"])

        ckpt = train(histories, cfg, log=log_epoch)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(ckpt, args.out)
    summary = {"checkpoint": str(args.out), "model_version": ckpt.config_hash, "epochs": len(entries)}
    if args.plot:
        from .plotting import plot_loss

        summary["figure"] = str(plot_loss(entries, Path(str(args.out) + ".loss.png")))
    print(json.dumps(summary))
    return 0


def cmd_eval(args) -> int:
    from .data.events import load_test_cases
    from .evaluation import evaluate

    ckpt = _load_ckpt(args.checkpoint)
    cases = load_test_cases(_resolve(args.test, "test", "cases.jsonl"))
    if not cases:
        raise CliError("empty_input", "no test cases")
    ks = args.k or [100, 20]
    reports = {k: r.to_json() for k, r in evaluate(ckpt.model, cases, ks).items()}
    out = {
        "model_version": ckpt.config_hash,
        "aggregation": next(iter(reports.values()))["aggregation"],
        "reports": {str(k): reports[k] for k in ks},
    }
    _write_json(out, args.out)
    # delimited summary: one tab-separated row per K
    print("K\tN\thit_rate\tprecision\trecall\tf1")
    for k in ks:
        r = reports[k]
        print(f"{k}\t{r['N']}\t{r['hit_rate']:.6f}\t{r['precision']:.6f}\t{r['recall']:.6f}\t{r['f1']:.6f}")
    if args.plot:
        from .plotting import plot_metrics

        base = Path(args.out) if args.out not in (None, "-") else Path("report.json")
        fig = plot_metrics(reports, base.with_suffix(".png"))
        print(f"figure\t{fig}")
    return 0


def cmd_recommend(args) -> int:
    from .serving import Recommender, RequestError

    rec = Recommender(_load_ckpt(args.checkpoint))
    req = _read_json(args.history)
    if not isinstance(req, dict):
        raise CliError("bad_request", "history file must hold a JSON object")
    if args.n is not None:
        req["n"] = args.n
    try:
        resp = rec.recommend(req)
    except RequestError as exc:
        raise CliError("bad_request", str(exc)) from None
    _write_json(resp, args.out)
    return 0


def cmd_inspect_attention(args) -> int:
    from .serving import Recommender, RequestError, parse_request

    ckpt = _load_ckpt(args.checkpoint)
    rec = Recommender(ckpt)
    req = _read_json(args.session)
    if isinstance(req, list):
        req = {"events": req}
    try:
        _, profile, events, _ = parse_request(req)
    except RequestError as exc:
        raise CliError("bad_request", str(exc)) from None
    short, long_term = rec.split(events)
    model = ckpt.model
    res = model.forward(model.make_batch([short.events], [long_term], [profile]))
    labels = [e.item_id for e in short.events]
    out = {
        "items": labels,
        "heads": res.self_attention[0].tolist(),
        "user_attention": None if res.user_attention is None else res.user_attention[0].tolist(),
    }
    _write_json(out, args.out)
    if args.plot:
        from .plotting import plot_attention

        base = Path(args.out) if args.out not in (None, "-") else Path("attention.json")
        print(f"figure\t{plot_attention(res.self_attention[0], labels, base.with_suffix('.png'))}", file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    from .serving import serve

    ckpt = _load_ckpt(args.checkpoint)

    def ready(server):
        host, port = server.server_address[:2]
        print(json.dumps({"listening": f"http://{host}:{port}", "model_version": ckpt.config_hash}), flush=True)

    try:
        serve(ckpt, args.host, args.port, ready=ready)
    except KeyboardInterrupt:
        pass
    return 0


def cmd_config(args) -> int:
    """Print the default training config as key = value lines."""
    from .config import TrainingConfig

    cfg = TrainingConfig()
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        print(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
    return 0


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seqmatch", description="Sequential deep matching recommender.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic event log")
    g.add_argument("--scenario", choices=("transitions", "longterm"), default="transitions")
    g.add_argument("--users", type=int, default=500)
    g.add_argument("--items", type=int, default=200)
    g.add_argument("--events-per-user", type=int, default=60)
    g.add_argument("--test-session-len", type=int, default=3)
    g.add_argument("--clusters", type=int, default=20)
    g.add_argument("--noise", type=float, default=0.1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    pr = sub.add_parser("prepare", help="sessionize and split an event log")
    pr.add_argument("--input", required=True)
    pr.add_argument("--output", required=True)
    pr.add_argument("--gap-seconds", type=int, default=600)
    pr.add_argument("--max-session-len", type=int, default=50)
    pr.add_argument("--lookback-days", type=int, default=7)
    pr.add_argument("--longterm-cap", type=int, default=20)
    pr.add_argument("--min-item-count", type=int, default=5)
    pr.add_argument("--spam-threshold", type=int, default=1000)
    pr.add_argument("--test-prefix", type=float, default=0.25)
    pr.add_argument("--test-days", type=int, default=1, help="trailing calendar days held out for testing")
    pr.set_defaults(func=cmd_prepare)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--data", required=True, help="prepare output dir (or its train/ dir)")
    t.add_argument("--config", help="key = value training config file")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--metrics", help="NDJSON per-epoch log (default <out>.metrics.jsonl)")
    t.add_argument("--plot", action="store_true", help="also write <out>.loss.png")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="offline metrics on test cases")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--test", required=True, help="prepare output dir (or its test/ dir)")
    e.add_argument("--k", type=int, action="append", help="cutoff; repeatable (default 100 and 20)")
    e.add_argument("--out", default="-", help="report JSON path ('-' for stdout)")
    e.add_argument("--plot", action="store_true", help="also write a metrics bar chart next to --out")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("recommend", help="top-N items for one request")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--history", required=True, help="request JSON: user_id, profile, events, n")
    r.add_argument("--n", type=int)
    r.add_argument("--out", default="-")
    r.set_defaults(func=cmd_recommend)

    a = sub.add_parser("inspect-attention", help="dump per-head attention weights")
    a.add_argument("--checkpoint", required=True)
    a.add_argument("--session", required=True, help="request JSON or a bare list of events")
    a.add_argument("--out", default="-")
    a.add_argument("--plot", action="store_true")
    a.set_defaults(func=cmd_inspect_attention)

    s = sub.add_parser("serve", help="HTTP recommendation service")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8080)
    s.set_defaults(func=cmd_serve)

    c = sub.add_parser("config", help="print the default training config")
    c.set_defaults(func=cmd_config)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc.kind}: {exc}", file=sys.stderr)
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        kind = type(exc).__name__
        print(f"error: {kind}: {str(exc).splitlines()[0] if str(exc) else kind}", file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
