"""Command-line front end.

Every subcommand accepts ``--config FILE`` pointing at a UTF-8 key=value
file (``#`` starts a comment). Values there override built-in defaults;
explicit command-line flags override both. Keys must name options of the
subcommand being run, with ``-`` and ``_`` interchangeable; anything
else is rejected.

Outputs are deterministic: running a command twice with the same inputs
produces byte-identical files. Timing output from ``bench`` is the one
exception, since it reports wall-clock measurements.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, RoadAnomalyError, ValidationError
from .labels import assign_ood_labels, boundary_mask, build_schema, make_eval_gt, remap_labels
from .metrics import evaluate, miou
from .pipeline import bench_metrics, bench_scoring, score_with_method
from .scoring import METHODS
from .synth import SceneConfig, extract_features, generate_scene
from .tensor_io import LogitMap, ProbMap, read_tensor, write_tensor
from .toy import ToyModel, TrainConfig, predict, train_toy


@dataclass(frozen=True)
class _Opt:
    name: str
    type: type = str
    default: object = None
    help: str = ""
    required: bool = False
    flag: bool = False

    @property
    def dest(self) -> str:
        return self.name.replace("-", "_")


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


def _read_config(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path}: not valid UTF-8 ({exc})") from exc
    pairs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line.strip()!r}")
        key, _, raw = body.partition("=")
        pairs.append((key.strip(), raw.strip()))
    return pairs


def _resolve(opts, ns) -> dict:
    values = {o.dest: o.default for o in opts}
    by_dest = {o.dest: o for o in opts}
    config = getattr(ns, "config", None)
    if config is not None:
        for key, raw in _read_config(config):
            dest = key.replace("-", "_")
            opt = by_dest.get(dest)
            if opt is None:
                raise ConfigError(f"unknown config key {key!r} for this command")
            try:
                values[dest] = _parse_bool(raw) if opt.flag else opt.type(raw)
            except ValueError as exc:
                raise ConfigError(f"config key {key!r}: {exc}") from exc
    for key, value in vars(ns).items():
        if key.startswith("_") or key == "config":
            continue
        values[key] = value
    missing = [o.name for o in opts if o.required and values[o.dest] is None]
    if missing:
        raise ConfigError(f"missing required options: {', '.join('--' + m for m in missing)}")
    return values


def _add_command(subparsers, name, help_text, opts, func):
    sp = subparsers.add_parser(name, help=help_text, description=help_text)
    for o in opts:
        if o.flag:
            sp.add_argument(f"--{o.name}", action="store_true", default=argparse.SUPPRESS, help=o.help)
        else:
            sp.add_argument(f"--{o.name}", type=o.type, default=argparse.SUPPRESS, help=o.help)
    sp.add_argument("--config", default=argparse.SUPPRESS, help="key=value file with option defaults")
    sp.set_defaults(_func=func, _opts=opts)


# --- prepare-labels ---------------------------------------------------

_PREPARE_OPTS = (
    _Opt("ids", str, None, "semantic id tensor (H, W)", required=True),
    _Opt("schema", str, "grouped7", "class schema: grouped7 or fine19"),
    _Opt("void-id", int, 255, "source id treated as void"),
    _Opt("ood-from-void", flag=True, help="turn void pixels into object-only targets"),
    _Opt("ood-mask", str, None, "mask tensor of extra object-only pixels"),
    _Opt("radius", int, 2, "boundary dilation radius"),
    _Opt("out-labels", str, None, "output label mask tensor", required=True),
    _Opt("out-boundary", str, None, "output boundary mask tensor", required=True),
)


def _cmd_prepare_labels(v) -> int:
    schema = build_schema(v["schema"])
    ids = read_tensor(v["ids"])
    labels = remap_labels(ids, schema, void_id=v["void_id"])
    if v["ood_from_void"]:
        labels = assign_ood_labels(labels, ids == v["void_id"])
    if v["ood_mask"] is not None:
        labels = assign_ood_labels(labels, read_tensor(v["ood_mask"]) != 0)
    delta = boundary_mask(labels, v["radius"])
    labels.save(v["out_labels"])
    write_tensor(delta.astype(np.uint8), v["out_boundary"])
    objects = ", ".join(schema.names[i] for i in sorted(schema.object_members))
    print(f"schema={v['schema']} k={schema.k} classes={', '.join(schema.names)}")
    print(f"object_classes={objects}")
    print(f"ignored_pixels={int(labels.ignore().sum())}")
    print(f"boundary_pixels={int(delta.sum())} radius={v['radius']}")
    print(f"wrote {v['out_labels']} and {v['out_boundary']}")
    return 0


# --- score ------------------------------------------------------------

_SCORE_OPTS = (
    _Opt("probs", str, None, "probability tensor (H, W, k or k+1)"),
    _Opt("logits", str, None, "logit tensor (H, W, k or k+1)"),
    _Opt("model", str, None, "toy model json; scores --image instead of stored tensors"),
    _Opt("image", str, None, "image tensor (H, W, 3) to run --model on"),
    _Opt("k", int, None, "number of predefined classes", required=True),
    _Opt("methods", str, "uos", "comma-separated: us, uos, entropy, maxlogit"),
    _Opt("out-dir", str, None, "directory for score tensors", required=True),
)


def _cmd_score(v) -> int:
    methods = tuple(m.strip() for m in v["methods"].split(",") if m.strip())
    if not methods:
        raise ConfigError("no methods requested")
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    k = v["k"]
    if k < 1:
        raise ValidationError("k must be >= 1")

    probs = logits = None
    if v["model"] is not None:
        if v["image"] is None:
            raise ConfigError("--model needs --image")
        model = ToyModel.load(v["model"])
        if model.k_predefined != k:
            raise ValidationError(f"model has k={model.k_predefined}, asked for k={k}")
        probs, logits = predict(model, extract_features(read_tensor(v["image"])))
    else:
        if v["probs"] is not None:
            arr = read_tensor(v["probs"])
            if arr.ndim != 3 or arr.shape[2] not in (k, k + 1):
                raise ValidationError(
                    f"probability tensor must have {k} or {k + 1} channels, got {arr.shape}"
                )
            # k channels means no object channel: usable for us, not uos
            probs = ProbMap(arr) if arr.shape[2] == k + 1 else arr.astype(np.float32)
        if v["logits"] is not None:
            arr = read_tensor(v["logits"])
            if arr.ndim != 3 or arr.shape[2] < k:
                raise ValidationError(f"logit tensor needs at least {k} channels")
            logits = LogitMap(arr)

    out_dir = Path(v["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    for m in methods:
        smap = score_with_method(m, probs=probs, logits=logits, k=k)
        path = out_dir / f"score_{m}.pxt"
        write_tensor(smap.values, path)
        line = f"{m}: wrote {path}"
        if smap.log_values is not None:
            log_path = out_dir / f"score_{m}_log.pxt"
            write_tensor(smap.log_values, log_path)
            line += f" and {log_path}"
        print(line)
    return 0


# --- eval -------------------------------------------------------------

_EVAL_OPTS = (
    _Opt("manifest", str, None, "file of records: score=F gt=F | score=F obstacle=F roi=F", required=True),
    _Opt("mode", str, "exact", "exact or streaming"),
    _Opt("bins", int, 65536, "histogram bins for streaming mode"),
    _Opt("method", str, "scores", "method label for the report"),
    _Opt("k", int, None, "class count for --with-miou"),
    _Opt("with-miou", flag=True, help="also pool miou from pred=/gtid= record entries"),
    _Opt("ignore-id", int, 255, "ground-truth id skipped by miou"),
    _Opt("out", str, None, "report output (key=value lines)", required=True),
    _Opt("jsonl", str, None, "append the report as one json line"),
)


def _parse_manifest(path: str):
    base = Path(path).parent
    records = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        record = {}
        for token in body.split():
            if "=" not in token:
                raise ConfigError(f"{path}:{lineno}: expected key=value tokens")
            key, _, value = token.partition("=")
            record[key] = str(base / value)
        records.append(record)
    if not records:
        raise ConfigError(f"{path}: no records")
    return records


def _cmd_eval(v) -> int:
    records = _parse_manifest(v["manifest"])
    score_maps = []
    gts = []
    for record in records:
        if "score" not in record:
            raise ConfigError("every record needs score=")
        score_maps.append(read_tensor(record["score"]))
        if "gt" in record:
            gts.append(read_tensor(record["gt"]))
        elif "obstacle" in record and "roi" in record:
            gts.append(
                make_eval_gt(read_tensor(record["obstacle"]), read_tensor(record["roi"]))
            )
        else:
            raise ConfigError("records need gt= or both obstacle= and roi=")
    report = evaluate(score_maps, gts, mode=v["mode"], bins=v["bins"], method=v["method"])
    if v["with_miou"]:
        if v["k"] is None:
            raise ConfigError("--with-miou needs --k")
        preds = []
        gtids = []
        for record in records:
            if "pred" not in record or "gtid" not in record:
                raise ConfigError("--with-miou needs pred= and gtid= in every record")
            preds.append(read_tensor(record["pred"]))
            gtids.append(read_tensor(record["gtid"]))
        report.miou = miou(preds, gtids, v["k"], ignore_id=v["ignore_id"])
    text = report.to_kv_text()
    Path(v["out"]).write_text(text, encoding="utf-8")
    if v["jsonl"] is not None:
        with open(v["jsonl"], "a", encoding="utf-8") as fh:
            fh.write(report.to_json_line() + "\n")
    print(text, end="")
    return 0


# --- gen-synth --------------------------------------------------------

_GEN_OPTS = (
    _Opt("out-dir", str, None, "output directory", required=True),
    _Opt("scenes", int, 20, "number of scenes"),
    _Opt("seed", int, 0, "stream seed"),
    _Opt("index-base", int, 0, "index of the first scene"),
    _Opt("height", int, 128, "scene height"),
    _Opt("width", int, 128, "scene width"),
    _Opt("density", float, 1.5, "expected obstacles per scene"),
    _Opt("noise", float, 0.03, "pixel noise std"),
)


def _cmd_gen_synth(v) -> int:
    cfg = SceneConfig(
        height=v["height"], width=v["width"], obstacle_density=v["density"],
        noise_level=v["noise"], seed=v["seed"],
    )
    out_dir = Path(v["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [
        "# synthetic scene manifest",
        f"# seed={v['seed']} height={v['height']} width={v['width']}"
        f" density={v['density']} noise={v['noise']}",
    ]
    for i in range(v["scenes"]):
        index = v["index_base"] + i
        image, ids, obstacle, roi = generate_scene(cfg, index)
        names = {}
        for kind, arr in (("image", image), ("ids", ids), ("obstacle", obstacle), ("roi", roi)):
            names[kind] = f"scene_{index:06d}_{kind}.pxt"
            write_tensor(arr, out_dir / names[kind])
        lines.append(
            f"index={index} image={names['image']} ids={names['ids']}"
            f" obstacle={names['obstacle']} roi={names['roi']}"
        )
    manifest = out_dir / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {v['scenes']} scenes and {manifest}")
    return 0


# --- train-toy --------------------------------------------------------

_TRAIN_OPTS = (
    _Opt("out", str, None, "model output (json)", required=True),
    _Opt("curve", str, None, "training curve output (csv: step,loss)"),
    _Opt("seed", int, 0, "seed for scenes, init and batches"),
    _Opt("height", int, 128, "scene height"),
    _Opt("width", int, 128, "scene width"),
    _Opt("density", float, 1.5, "expected obstacles per obstacle scene"),
    _Opt("noise", float, 0.03, "pixel noise std"),
    _Opt("steps", int, 5000, "optimization steps"),
    _Opt("batch-pixels", int, 4096, "pixels per step"),
    _Opt("lr0", float, 0.01, "initial learning rate"),
    _Opt("momentum", float, 0.9, "sgd momentum"),
    _Opt("weight-decay", float, 1e-4, "l2 weight decay"),
    _Opt("poly-power", float, 0.9, "learning-rate decay exponent"),
    _Opt("lam", float, 3.0, "boundary term weight"),
    _Opt("use-ood", flag=True, help="supervise void pixels as object-only"),
    _Opt("ood-fraction", float, 0.2, "share of training scenes with obstacles"),
    _Opt("train-scenes", int, 48, "number of training scenes"),
    _Opt("radius", int, 2, "boundary dilation radius"),
)


def _cmd_train_toy(v) -> int:
    scene_cfg = SceneConfig(
        height=v["height"], width=v["width"], obstacle_density=v["density"],
        noise_level=v["noise"], seed=v["seed"],
    )
    train_cfg = TrainConfig(
        lr0=v["lr0"], momentum=v["momentum"], weight_decay=v["weight_decay"],
        poly_power=v["poly_power"], max_steps=v["steps"],
        batch_pixels=v["batch_pixels"], lam=v["lam"], use_ood=v["use_ood"],
        seed=v["seed"], n_train_scenes=v["train_scenes"],
        ood_scene_fraction=v["ood_fraction"], boundary_radius=v["radius"],
    )
    model, curve = train_toy(scene_cfg, train_cfg)
    model.save(v["out"])
    if v["curve"] is not None:
        rows = "".join(f"{s},{l}\n" for s, l in zip(curve.steps, curve.losses))
        Path(v["curve"]).write_text("step,loss\n" + rows, encoding="utf-8")
    print(f"trained {v['steps']} steps, final loss {curve.losses[-1]:.6f}")
    print(f"wrote {v['out']}")
    return 0


# --- bench ------------------------------------------------------------

_BENCH_OPTS = (
    _Opt("height", int, 2048, "map height"),
    _Opt("width", int, 1024, "map width"),
    _Opt("channels", int, 20, "predefined classes in the timed map"),
    _Opt("reps", int, 100, "repetitions per measurement"),
    _Opt("methods", str, "us,uos,entropy,maxlogit", "scorers to time"),
    _Opt("eval-pixels", int, 2 * 1024 * 1024, "pooled scores for the metric timing"),
    _Opt("bins", int, 65536, "streaming histogram bins"),
    _Opt("skip-metrics", flag=True, help="time only the scorers"),
    _Opt("seed", int, 0, "seed for the random inputs"),
)


def _cmd_bench(v) -> int:
    methods = tuple(m.strip() for m in v["methods"].split(",") if m.strip())
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}")
    print(
        f"scoring {v['height']}x{v['width']} map, {v['channels']}+1 channels, "
        f"{v['reps']} reps"
    )
    for result in bench_scoring(
        v["height"], v["width"], v["channels"], v["reps"], methods, seed=v["seed"]
    ):
        print(result.format_line())
    if not v["skip_metrics"]:
        print(f"metrics on {v['eval_pixels']} pooled scores, {v['reps']} reps")
        for result in bench_metrics(v["eval_pixels"], v["reps"], v["bins"], seed=v["seed"]):
            print(result.format_line())
    return 0


# --- driver -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roadanomaly",
        description="Pixel-wise unknown-object scoring and evaluation toolkit",
    )
    sub = parser.add_subparsers(dest="_command", metavar="command")
    _add_command(sub, "prepare-labels", "pack semantic ids into label and boundary masks",
                 _PREPARE_OPTS, _cmd_prepare_labels)
    _add_command(sub, "score", "compute anomaly score maps",
                 _SCORE_OPTS, _cmd_score)
    _add_command(sub, "eval", "pool score maps against ground truth and report metrics",
                 _EVAL_OPTS, _cmd_eval)
    _add_command(sub, "gen-synth", "write synthetic scenes with ground truth",
                 _GEN_OPTS, _cmd_gen_synth)
    _add_command(sub, "train-toy", "train the toy pixel model on synthetic scenes",
                 _TRAIN_OPTS, _cmd_train_toy)
    _add_command(sub, "bench", "time the scoring kernels and pooled metrics",
                 _BENCH_OPTS, _cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    if getattr(ns, "_func", None) is None:
        parser.print_help()
        return 2
    try:
        values = _resolve(ns._opts, ns)
        return ns._func(values)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RoadAnomalyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
