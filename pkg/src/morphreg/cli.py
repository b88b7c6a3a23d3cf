"""Command-line interface.

Every command accepts ``--config FILE`` (JSON object keyed by option dest
names; explicit flags win) and echoes its fully resolved configuration as
JSON on stderr, or to ``--echo-config PATH``.  Exit codes: 0 success,
1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import sys
from collections import OrderedDict, defaultdict
from pathlib import Path

import numpy as np

from . import io
from .loss import LossConfig, gradcheck
from .matching import Pair, describe, fit_pca, resolve_gammas, score_pairs
from .metrics.geometry import evaluate_meshes
from .metrics.recognition import cmc, verification_metrics
from .model import generate_synthetic_model, sample_params, synthesize
from .pooling import ItemKind, TemplateItem, WeightedEstimate, pool_arrays, pool_template
from .regressor import Dataset, TrainConfig, make_synthetic_task, train

# options that are not part of the echoed run configuration
_META = {"command", "config", "echo_config", "help"}


class UsageError(Exception):
    pass


def _param_header(n):
    return [f"p{i}" for i in range(n)]


def _emit_table(header, rows, out, text_view=None):
    if out:
        io.write_csv(out, header, rows)
    else:
        _print_csv(header, rows)
    if text_view:
        print(text_view, file=sys.stderr)


def _print_csv(header, rows):
    print(",".join(header))
    for r in rows:
        print(",".join(io.fmt_float(v) if isinstance(v, (float, np.floating)) else str(v) for v in r))


# -- commands -------------------------------------------------------------------

def cmd_make_model(args):
    model = generate_synthetic_model(args.seed, args.vertices, args.k_shape, args.k_texture)
    io.save_model(model, args.out)


def cmd_synth(args):
    model = io.load_model(args.model)
    if args.params and args.random:
        raise UsageError("use either --params or --random")
    if args.params:
        _, keys, values = io.read_vectors(args.params)
        if not keys:
            raise ValueError(f"{args.params}: no parameter rows")
        row = 0 if args.id is None else keys.index(args.id) if args.id in keys else None
        if row is None:
            raise ValueError(f"{args.params}: no row with id {args.id!r}")
        gamma = values[row]
    elif args.random:
        gamma = sample_params(model, np.random.default_rng(args.seed)).gamma
    else:
        gamma = np.zeros(model.n_params)
    mesh = synthesize(model, gamma, whitened=args.whitened)
    io.write_ply(mesh, args.out)


def _pool_subject(rows, mode):
    """rows: list of (item_id, kind, weight, gamma) for one subject."""
    if mode == "auto":
        mode = "template" if any(kind == ItemKind.VIDEO.value for _, kind, _, _ in rows) else "weighted"
    if mode == "weighted":
        return pool_arrays(np.stack([g for *_, g in rows]), [w for _, _, w, _ in rows])
    items = OrderedDict()
    for item_id, kind, weight, gamma in rows:
        items.setdefault((item_id, kind), []).append(WeightedEstimate(gamma, weight))
    return pool_template([TemplateItem(kind, ests) for (_, kind), ests in items.items()])


def cmd_pool(args):
    header, rows = io.read_csv(args.estimates)
    if header[:4] != ["subject_id", "item_id", "kind", "weight"]:
        raise ValueError(f"{args.estimates}: expected columns subject_id,item_id,kind,weight,p0,...")
    groups = OrderedDict()
    for r in rows:
        groups.setdefault(r[0], []).append((r[1], r[2], float(r[3]), np.array([float(v) for v in r[4:]])))
    out = []
    for sid, subject_rows in groups.items():
        out.append([sid] + list(_pool_subject(subject_rows, args.mode)))
    _emit_table(["subject_id"] + header[4:], out, args.out)


def _write_features(path, ids, features):
    io.write_csv(path, ["subject_id"] + [f"f{i}" for i in range(features.shape[1])],
                 ([str(s)] + list(f) for s, f in zip(ids, features)))


def _write_targets(path, data):
    seen = OrderedDict()
    for sid, t in zip(data.subject_ids, data.targets):
        seen.setdefault(str(sid), t)
    io.write_csv(path, ["subject_id"] + _param_header(data.targets.shape[1]), ([k] + list(v) for k, v in seen.items()))


def _image_ids(subject_ids):
    counts = defaultdict(int)
    out = []
    for s in subject_ids:
        out.append(f"{s}_{counts[s]}")
        counts[s] += 1
    return out


def cmd_make_task(args):
    train_set, val_set, _ = make_synthetic_task(args.seed, args.subjects, args.images, args.d_feat, args.noise)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_features(out / "train_features.csv", train_set.subject_ids, train_set.features)
    _write_targets(out / "train_targets.csv", train_set)
    _write_features(out / "val_features.csv", val_set.subject_ids, val_set.features)
    _write_targets(out / "val_targets.csv", val_set)

    # verification protocol on the validation images: one genuine and one impostor pair per subject
    ids = _image_ids(val_set.subject_ids)
    by_subject = OrderedDict()
    for sid, iid in zip(val_set.subject_ids, ids):
        by_subject.setdefault(str(sid), []).append(iid)
    subjects = list(by_subject)
    pairs = []
    for i, s in enumerate(subjects):
        imgs = by_subject[s]
        if len(imgs) > 1:
            pairs.append((imgs[0], imgs[1], "same"))
        other = by_subject[subjects[(i + 1) % len(subjects)]]
        if other is not imgs:
            pairs.append((imgs[0], other[-1], "diff"))
    io.write_csv(out / "val_pairs.csv", ["id_a", "id_b", "label"], pairs)


def _load_dataset(features_path, targets_path):
    header, rows = io.read_csv(features_path)
    if header[0] != "subject_id":
        raise ValueError(f"{features_path}: first column must be subject_id")
    sids = [r[0] for r in rows]
    feats = np.asarray([[float(v) for v in r[1:]] for r in rows], dtype=np.float64)
    _, tkeys, tvals = io.read_vectors(targets_path)
    table = dict(zip(tkeys, tvals))
    missing = sorted(set(sids) - set(table))
    if missing:
        raise ValueError(f"{targets_path}: no target for subjects {missing[:5]}")
    return Dataset(feats, np.stack([table[s] for s in sids]), np.asarray(sids))


def cmd_train(args):
    data = _load_dataset(args.train_features, args.train_targets)
    val = _load_dataset(args.val_features, args.val_targets)
    cfg = TrainConfig(
        batch_size=args.batch_size,
        momentum=args.momentum,
        weight_decay=args.weight_decay,
        lr_head=args.lr,
        lr_decay_factor=args.lr_decay,
        patience=args.patience,
        max_epochs=args.max_epochs,
        seed=args.seed,
        loss=LossConfig(args.lambda_over, args.lambda_under),
    )
    reg, trace = train(data, val, cfg)
    io.save_regressor(reg, args.out)
    if args.log:
        io.write_csv(args.log, ["epoch", "lr", "train_loss", "val_loss"], trace.epochs)


def _regress_file(checkpoint, features_path):
    reg = io.load_regressor(checkpoint)
    header, rows = io.read_csv(features_path)
    if header[0] != "subject_id":
        raise ValueError(f"{features_path}: first column must be subject_id")
    feats = np.asarray([[float(v) for v in r[1:]] for r in rows], dtype=np.float64)
    return _image_ids([r[0] for r in rows]), reg.forward(feats)


def cmd_predict(args):
    ids, preds = _regress_file(args.checkpoint, args.features)
    io.write_csv(args.out, ["id"] + _param_header(preds.shape[1]), ([i] + list(p) for i, p in zip(ids, preds)))


def _frames(keys, values):
    frames = OrderedDict()
    for k, v in zip(keys, values):
        frames.setdefault(k, []).append(v)
    return {k: np.stack(v) for k, v in frames.items()}


def cmd_match(args):
    if args.descriptors:
        _, keys, values = io.read_vectors(args.descriptors)
        descriptors = dict(zip(keys, values))
    else:
        if not (args.params and args.pca_train):
            raise UsageError("match needs --descriptors, or --params with --pca-train")
        if args.checkpoint:
            keys, values = _regress_file(args.checkpoint, args.params)
            _, train_values = _regress_file(args.checkpoint, args.pca_train)
        else:
            _, keys, values = io.read_vectors(args.params)
            _, _, train_values = io.read_vectors(args.pca_train)
        templates = None
        if args.templates:
            theader, trows = io.read_csv(args.templates)
            if theader[:3] != ["template_id", "item_id", "kind"]:
                raise ValueError(f"{args.templates}: expected columns template_id,item_id,kind")
            templates = OrderedDict()
            for tid, item, kind in (r[:3] for r in trows):
                templates.setdefault(tid, []).append((item, kind))
        pca = fit_pca(train_values, args.components)
        descriptors = describe(resolve_gammas(_frames(keys, values), templates), pca)
    _, prow = io.read_csv(args.pairs)
    pairs = [Pair(r[0], r[1], r[2]) for r in prow]
    scores = score_pairs(pairs, descriptors)
    _emit_table(["id_a", "id_b", "label", "score"], scores, args.out)


def _text_table(header, row):
    widths = [max(len(h), len(c)) for h, c in zip(header, row)]
    return "\n".join(" ".join(x.rjust(w) for x, w in zip(line, widths)) for line in (header, row))


def cmd_eval(args):
    modes = [bool(args.estimate or args.truth), bool(args.scores), bool(args.cmc_scores)]
    if sum(modes) != 1:
        raise UsageError("eval needs exactly one of --estimate/--truth, --scores, --cmc-scores")
    if modes[0]:
        if not (args.estimate and args.truth):
            raise UsageError("--estimate and --truth go together")
        errs = evaluate_meshes(
            io.read_ply(args.estimate),
            io.read_ply(args.truth),
            radius_mm=args.crop_radius,
            resolution=args.resolution,
            pixel_scale=args.pixel_scale,
            camera_distance=args.camera_distance,
            icp=not args.no_icp,
            literal_3drmse=args.literal_3drmse,
        )
        header = ["3drmse", "rmse", "log10", "rel"]
        row = [errs["rmse3d"], errs["rmse"], errs["log10"], errs["rel"]]
        view = _text_table(
            ["3DRMSE", "RMSE", "log10 x1e4", "Rel x1e4"],
            [f"{row[0]:.3f}", f"{row[1]:.3f}", f"{row[2] * 1e4:.1f}", f"{row[3] * 1e4:.1f}"],
        )
    elif modes[1]:
        header_in, rows = io.read_csv(args.scores)
        if header_in[:4] != ["id_a", "id_b", "label", "score"]:
            raise ValueError(f"{args.scores}: expected columns id_a,id_b,label,score")
        m = verification_metrics([float(r[3]) for r in rows], [r[2] for r in rows])
        header = ["accuracy", "100-eer", "auc", "tar_far_10", "tar_far_1"]
        row = [m["accuracy"], 1.0 - m["eer"], m["auc"], m["tar_at_far_10"], m["tar_at_far_1"]]
        view = _text_table(["Accuracy", "100%-EER", "AUC", "TAR-10%", "TAR-1%"], [f"{100 * v:.2f}" for v in row])
    else:
        header_in, rows = io.read_csv(args.cmc_scores)
        if header_in[:4] != ["probe_id", "probe_identity", "gallery_identity", "score"]:
            raise ValueError(f"{args.cmc_scores}: expected columns probe_id,probe_identity,gallery_identity,score")
        probes = list(OrderedDict((r[0], r[1]) for r in rows).items())
        gallery = sorted({r[2] for r in rows})
        gindex = {g: j for j, g in enumerate(gallery)}
        pindex = {p: i for i, (p, _) in enumerate(probes)}
        matrix = np.full((len(probes), len(gallery)), -np.inf)
        for r in rows:
            matrix[pindex[r[0]], gindex[r[2]]] = float(r[3])
        rates = cmc(matrix, [ident for _, ident in probes], gallery)
        ranks = [int(k) for k in args.ranks.split(",")]
        if min(ranks) < 1:
            raise UsageError("ranks must be >= 1")
        header = [f"rank_{k}" for k in ranks]
        row = [float(rates[min(k, len(rates)) - 1]) for k in ranks]
        view = _text_table([f"Rank-{k}" for k in ranks], [f"{100 * v:.2f}" for v in row])
    _emit_table(header, [row], args.out, view if args.table else None)


def cmd_gradcheck(args):
    cfg = LossConfig(args.lambda_over, args.lambda_under)
    err = gradcheck(seed=args.seed, dim=args.dim, n_points=args.points, cfg=cfg, h=args.step)
    ok = err < args.threshold
    print(f"max_rel_error,{io.fmt_float(err)}")
    print(f"status,{'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


# -- parser ------------------------------------------------------------------------

COMMANDS = {}


def _command(sub, name, func, help, required=()):
    p = sub.add_parser(name, help=help, description=help)
    p.add_argument("--config", help="JSON file with option values (keys are option dest names)")
    p.add_argument("--echo-config", help="write the resolved configuration JSON here")
    p.set_defaults(command=name)
    COMMANDS[name] = (p, func, tuple(required))
    return p


def build_parser():
    parser = argparse.ArgumentParser(prog="morphreg", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = _command(sub, "make-model", cmd_make_model, "generate a synthetic morphable model file", ["out"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vertices", type=int, default=400)
    p.add_argument("--k-shape", type=int, default=99)
    p.add_argument("--k-texture", type=int, default=99)
    p.add_argument("--out")

    p = _command(sub, "synth", cmd_synth, "synthesize a mesh (PLY) from model parameters", ["model", "out"])
    p.add_argument("--model")
    p.add_argument("--params", help="CSV: id,p0,...; the first row (or --id) is used")
    p.add_argument("--id")
    p.add_argument("--random", action="store_true", help="draw parameters from the model prior")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--whitened", action="store_true", help="parameters are in units of component sigmas")
    p.add_argument("--out")

    p = _command(sub, "pool", cmd_pool, "pool per-image estimates per subject/template", ["estimates"])
    p.add_argument("--estimates", help="CSV: subject_id,item_id,kind,weight,p0,...")
    p.add_argument("--mode", choices=["auto", "weighted", "template"], default="auto")
    p.add_argument("--out")

    p = _command(sub, "make-task", cmd_make_task, "generate a synthetic regression task", ["out_dir"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subjects", type=int, default=400)
    p.add_argument("--images", type=int, default=5)
    p.add_argument("--d-feat", type=int, default=64)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--out-dir")

    defaults = TrainConfig()
    p = _command(sub, "train", cmd_train, "train the regression head with SGD",
                 ["train_features", "train_targets", "val_features", "val_targets", "out"])
    p.add_argument("--train-features")
    p.add_argument("--train-targets")
    p.add_argument("--val-features")
    p.add_argument("--val-targets")
    p.add_argument("--batch-size", type=int, default=defaults.batch_size)
    p.add_argument("--momentum", type=float, default=defaults.momentum)
    p.add_argument("--weight-decay", type=float, default=defaults.weight_decay)
    p.add_argument("--lr", type=float, default=defaults.lr_head)
    p.add_argument("--lr-decay", type=float, default=defaults.lr_decay_factor)
    p.add_argument("--patience", type=int, default=defaults.patience)
    p.add_argument("--max-epochs", type=int, default=defaults.max_epochs)
    p.add_argument("--lambda-over", type=float, default=defaults.loss.lambda_over)
    p.add_argument("--lambda-under", type=float, default=defaults.loss.lambda_under)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="checkpoint path")
    p.add_argument("--log", help="TrainLog CSV path")

    p = _command(sub, "predict", cmd_predict, "regress parameters from a features CSV", ["checkpoint", "features", "out"])
    p.add_argument("--checkpoint")
    p.add_argument("--features")
    p.add_argument("--out")

    p = _command(sub, "match", cmd_match, "score a pair protocol", ["pairs"])
    p.add_argument("--pairs", help="CSV: id_a,id_b,label")
    p.add_argument("--descriptors", help="CSV: id,d0,... (already embedded)")
    p.add_argument("--params", help="CSV: id,p0,... (rows sharing an id are video frames)")
    p.add_argument("--pca-train", help="training-split parameters CSV for fitting PCA")
    p.add_argument("--checkpoint", help="treat --params/--pca-train as feature CSVs and regress them first")
    p.add_argument("--templates", help="CSV: template_id,item_id,kind")
    p.add_argument("--components", type=int, default=None)
    p.add_argument("--out")

    p = _command(sub, "eval", cmd_eval, "shape accuracy or recognition metrics")
    p.add_argument("--estimate", help="estimated mesh (PLY)")
    p.add_argument("--truth", help="ground-truth mesh (PLY)")
    p.add_argument("--scores", help="verification scores CSV: id_a,id_b,label,score")
    p.add_argument("--cmc-scores", help="CSV: probe_id,probe_identity,gallery_identity,score")
    p.add_argument("--ranks", default="1,5,10,20")
    p.add_argument("--crop-radius", type=float, default=95.0)
    p.add_argument("--resolution", type=int, default=128)
    p.add_argument("--pixel-scale", type=float, default=1.6)
    p.add_argument("--camera-distance", type=float, default=500.0)
    p.add_argument("--no-icp", action="store_true")
    p.add_argument("--literal-3drmse", action="store_true")
    p.add_argument("--table", action="store_true", help="also print an aligned text view on stderr")
    p.add_argument("--out")

    p = _command(sub, "gradcheck", cmd_gradcheck, "check the loss gradient against finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=198)
    p.add_argument("--points", type=int, default=1000)
    p.add_argument("--lambda-over", type=float, default=1.0)
    p.add_argument("--lambda-under", type=float, default=3.0)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--threshold", type=float, default=1e-5)
    return parser


def _resolve(parser, argv):
    args = parser.parse_args(argv)
    sub, func, required = COMMANDS[args.command]
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            sub.error(f"cannot read config {args.config}: {exc}")
        if not isinstance(cfg, dict):
            sub.error("config must be a JSON object")
        known = {a.dest for a in sub._actions} - _META
        unknown = sorted(set(cfg) - known)
        if unknown:
            sub.error(f"unknown config keys: {', '.join(unknown)}")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    missing = [r for r in required if getattr(args, r) in (None, "")]
    if missing:
        sub.error("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))
    return args, func


def main(argv=None) -> int:
    parser = build_parser()
    args, func = _resolve(parser, argv)
    resolved = {k: v for k, v in sorted(vars(args).items()) if k not in _META}
    echo = json.dumps(resolved, sort_keys=True)
    print(f"# config {echo}", file=sys.stderr)
    if args.echo_config:
        Path(args.echo_config).write_text(json.dumps(resolved, sort_keys=True, indent=2) + "\n")
    try:
        status = func(args)
    except UsageError as exc:
        print(f"morphreg {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError, KeyError) as exc:
        print(f"morphreg {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return int(status or 0)


if __name__ == "__main__":
    sys.exit(main())
