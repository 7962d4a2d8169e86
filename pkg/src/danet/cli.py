"""Command-line experiment runner: train, eval, and theory subcommands.

Options come from a JSON config file plus flag overrides (flags win).
Every run is reproducible from its config and seed; report tables are
tab-delimited and each table gets a rendered figure next to it.
"""

import argparse
import json
import os
import struct
import sys
import time

import numpy as np

from . import data as data_io
from . import report
from .dan import (FT_NEAREST_NEIGHBOR, FT_REGRESSION, DanConfig, dan_fit,
                  dan_forward)
from .dan import layer_states as dan_layer_states
from .errors import ConfigError, DanetError, DataFormatError
from .kdan import KdanConfig, kdan_fit, kdan_forward
from .kdan import layer_states as kdan_layer_states
from .kdan import KdanModel
from .ridge import classify, encode_one_hot
from .serialize import load_container, save_model
from .theory import dynamics_trace, span_gain_check

MODEL_KINDS = ("dan", "kdan", "kdan-trim", "ridge", "krr")

DATASET_DEFAULTS = {
    "paths": [],
    "label_column": 0,
    "delimiter": ",",
    "has_header": False,
    "train_fraction": 2.0 / 3.0,
    "stratified": False,
}

DEFAULTS = {
    "model": "dan",
    "depth": 3,
    "lam": 0.1,
    "gamma": 1.0,
    "lambda_ft": 0.1,
    "beta_ft": 0.5,
    "relu": True,
    "ft": True,
    "ft_classifier": "regression",
    "trials": 1,
    "seed": 0,
    "standardize": None,  # None = format default: delimited on, idx off
    "out": "danet-run",
    "pairs": 1000,
}

CONFIG_KEYS = set(DEFAULTS) | {"dataset"}


# ---------------------------------------------------------------------------
# Option resolution


def _load_config_file(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        try:
            cfg = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    if "lambda" in cfg:  # accept the flag spelling in files too
        cfg["lam"] = cfg.pop("lambda")
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown config fields "
                          f"{sorted(unknown)}; known fields are "
                          f"{sorted(CONFIG_KEYS | {'lambda'} - {'lam'})}")
    if "dataset" in cfg:
        bad = set(cfg["dataset"]) - set(DATASET_DEFAULTS)
        if bad:
            raise ConfigError(f"{path}: unknown dataset fields {sorted(bad)}")
    return cfg


def resolve_options(args) -> dict:
    opts = dict(DEFAULTS)
    opts["dataset"] = dict(DATASET_DEFAULTS)
    if getattr(args, "config", None):
        cfg = _load_config_file(args.config)
        ds = cfg.pop("dataset", {})
        opts.update(cfg)
        opts["dataset"].update(ds)

    flag_map = ["model", "depth", "lam", "gamma", "lambda_ft", "beta_ft",
                "ft_classifier", "trials", "seed", "out", "pairs"]
    for key in flag_map:
        value = getattr(args, key, None)
        if value is not None:
            opts[key] = value
    if getattr(args, "no_relu", False):
        opts["relu"] = False
    if getattr(args, "no_ft", False):
        opts["ft"] = False
    if getattr(args, "standardize", None) is not None:
        opts["standardize"] = args.standardize
    if getattr(args, "dataset", None):
        opts["dataset"]["paths"] = list(args.dataset)

    if opts["model"] not in MODEL_KINDS:
        raise ConfigError(f"model must be one of {MODEL_KINDS}, "
                          f"got {opts['model']!r}")
    if opts["model"] in ("ridge", "krr") and opts["depth"] not in (None, 1, 3):
        # 3 is the untouched default; an explicit deeper request conflicts.
        if getattr(args, "depth", None) is not None:
            raise ConfigError(f"depth: {opts['model']} is single-layer; "
                              f"use dan/kdan for depth {opts['depth']}")
    if opts["trials"] < 1:
        raise ConfigError(f"trials must be >= 1, got {opts['trials']}")
    if opts["standardize"] not in (None, "on", "off"):
        raise ConfigError(f"standardize must be 'on' or 'off', "
                          f"got {opts['standardize']!r}")
    return opts


def build_model_config(opts):
    """Translate resolved options into (family, config)."""
    kind = opts["model"]
    ft_classifier = {"regression": FT_REGRESSION,
                     "nn": FT_NEAREST_NEIGHBOR}.get(opts["ft_classifier"],
                                                    opts["ft_classifier"])
    if kind == "ridge":
        return "dan", DanConfig(depth=1, lambda_layer=opts["lam"],
                                relu_enabled=False, ft_enabled=False)
    if kind == "dan":
        return "dan", DanConfig(depth=opts["depth"],
                                lambda_layer=opts["lam"],
                                lambda_ft=opts["lambda_ft"],
                                beta_ft=opts["beta_ft"],
                                relu_enabled=opts["relu"],
                                ft_enabled=opts["ft"],
                                ft_classifier=ft_classifier)
    if kind == "krr":
        return "kdan", KdanConfig(depth=1, lambda_layer=opts["lam"],
                                  gamma_layer=opts["gamma"], trim=True)
    trim = kind == "kdan-trim"
    return "kdan", KdanConfig(depth=opts["depth"], lambda_layer=opts["lam"],
                              gamma_layer=opts["gamma"],
                              lambda_ft=opts["lambda_ft"],
                              beta_ft=opts["beta_ft"], trim=trim)


# ---------------------------------------------------------------------------
# Dataset plumbing


def _idx_magic(path):
    try:
        with open(path, "rb") as f:
            head = f.read(4)
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    if len(head) == 4:
        (magic,) = struct.unpack(">I", head)
        if magic in (data_io.IDX_IMAGES_MAGIC, data_io.IDX_LABELS_MAGIC):
            return magic
    return None


def load_datasets(ds_opts):
    """Load (train, test-or-None) from the configured paths.

    IDX data takes image/label path pairs (two or four paths); delimited
    data takes one or two table paths.
    """
    paths = ds_opts["paths"]
    if not paths:
        raise ConfigError("dataset.paths: no dataset given "
                          "(use --dataset or the config file)")
    for p in paths:
        if not os.path.exists(p):
            raise DataFormatError(f"dataset file not found: {p}")
    if _idx_magic(paths[0]) is not None:
        if len(paths) not in (2, 4):
            raise ConfigError("dataset.paths: IDX data needs "
                              "TRAIN_IMAGES TRAIN_LABELS "
                              "[TEST_IMAGES TEST_LABELS]")
        train = data_io.load_idx(paths[0], paths[1])
        test = data_io.load_idx(paths[2], paths[3]) if len(paths) == 4 else None
        if test is not None and test.class_count != train.class_count:
            count = max(train.class_count, test.class_count)
            train.class_count = test.class_count = count
        return train, test, "idx"
    if len(paths) == 1:
        return load_single_delimited(ds_opts, paths[0]), None, "delimited"
    if len(paths) == 2:
        train, test = data_io.load_delimited_pair(
            paths[0], paths[1], label_column=ds_opts["label_column"],
            delimiter=ds_opts["delimiter"], has_header=ds_opts["has_header"])
        return train, test, "delimited"
    raise ConfigError("dataset.paths: delimited data takes TRAIN [TEST]")


def load_single_delimited(ds_opts, path):
    return data_io.load_delimited(path, label_column=ds_opts["label_column"],
                                  delimiter=ds_opts["delimiter"],
                                  has_header=ds_opts["has_header"])


def _resolve_standardize(opts, data_format) -> bool:
    if opts["standardize"] is None:
        return data_format == "delimited"
    return opts["standardize"] == "on"


def _pool(train, test):
    return data_io.Dataset(
        features=np.vstack([train.features, test.features]),
        labels=np.concatenate([train.labels, test.labels]),
        class_count=train.class_count,
        feature_names=train.feature_names,
        class_names=train.class_names,
        provenance=train.provenance + "|pooled")


def trial_split(train, test, ds_opts, trial_seed, reshuffle):
    """Data for one trial: the given split, or a seeded reshuffle."""
    if test is None:
        return data_io.split(train, ds_opts["train_fraction"],
                             stratified=ds_opts["stratified"],
                             seed=trial_seed)
    if not reshuffle:
        return train, test
    pooled = _pool(train, test)
    rng = np.random.default_rng(trial_seed)
    perm = rng.permutation(len(pooled))
    n_train = len(train)
    return (pooled.take(perm[:n_train], "|trial:train"),
            pooled.take(perm[n_train:], "|trial:test"))


# ---------------------------------------------------------------------------
# Fitting helpers shared by the subcommands


def fit_model(family, config, X, Y, validation, pairs):
    if family == "dan":
        return dan_fit(X, Y, config, validation=validation,
                       distance_pairs=pairs)
    return kdan_fit(X, Y, config, validation=validation,
                    distance_pairs=pairs)


def forward_model(model, X):
    if isinstance(model, KdanModel):
        return kdan_forward(model, X)
    return dan_forward(model, X)


def model_layer_states(model, X):
    if isinstance(model, KdanModel):
        return kdan_layer_states(model, X)
    return dan_layer_states(model, X)


def _remap_labels(ds, meta, class_count):
    """Align a standalone-loaded dataset with the vocabulary the model was
    trained with (first-appearance label order differs between files)."""
    stored_classes = meta.get("class_names")
    stored_features = meta.get("feature_names")
    if stored_features and ds.feature_names \
            and list(ds.feature_names) != list(stored_features):
        if len(ds.feature_names) != len(stored_features):
            raise DataFormatError(
                f"dataset has {len(ds.feature_names)} feature columns but "
                f"the model was trained with {len(stored_features)}")
        raise DataFormatError(
            "dataset encodes features differently from the model's training "
            "data; re-export it alongside the training table")
    labels = ds.labels
    if stored_classes and ds.class_names \
            and list(ds.class_names) != list(stored_classes):
        index = {name: i for i, name in enumerate(stored_classes)}
        missing = [n for n in ds.class_names if n not in index]
        if missing:
            raise DataFormatError(f"dataset classes {missing} are not in the "
                                  f"model's vocabulary {stored_classes}")
        lookup = np.array([index[n] for n in ds.class_names])
        labels = lookup[labels]
    if labels.size and labels.max() >= class_count:
        raise DataFormatError(f"dataset has label {int(labels.max())} but "
                              f"the model knows {class_count} classes")
    return labels


def _uses_final_layer_argmax(model) -> bool:
    if isinstance(model, KdanModel):
        return model.config.trim
    return not model.config.ft_enabled


def final_accuracy(model, X, labels, reports=None):
    """Test accuracy of the model's final classifier.

    For trimmed / FT-free stacks this equals the last layer's validation
    accuracy, which the fit already computed.
    """
    if reports is not None and _uses_final_layer_argmax(model) \
            and reports[-1].validation_accuracy is not None:
        return reports[-1].validation_accuracy
    _, resp = forward_model(model, X)
    return float(np.mean(classify(resp) == labels))


def best_validation_layer(reports):
    accs = [r.validation_accuracy for r in reports]
    if any(a is None for a in accs):
        return None
    return int(np.argmax(accs)) + 1


def _prepare_out(out_stem):
    parent = os.path.dirname(out_stem)
    if parent:
        os.makedirs(parent, exist_ok=True)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_train(opts) -> int:
    t0 = time.time()
    train, test, data_format = load_datasets(opts["dataset"])
    standardize = _resolve_standardize(opts, data_format)
    family, config = build_model_config(opts)
    reshuffle = opts["trials"] > 1

    per_trial = []
    kept = None
    for t in range(opts["trials"]):
        trial_seed = opts["seed"] + t
        tr, te = trial_split(train, test, opts["dataset"], trial_seed,
                             reshuffle)
        std = data_io.fit_standardizer(tr) if standardize else None
        X = std.apply(tr.features) if std else tr.features
        X_te = std.apply(te.features) if std else te.features
        Y = encode_one_hot(tr.labels, tr.class_count)
        model, reports = fit_model(family, config, X, Y,
                                   (X_te, te.labels), opts["pairs"])
        acc = final_accuracy(model, X_te, te.labels, reports)
        best = best_validation_layer(reports)
        per_trial.append({
            "trial": t,
            "seed": trial_seed,
            "final_accuracy": acc,
            "best_layer": best,
            "best_layer_accuracy": None if best is None
            else reports[best - 1].validation_accuracy,
            "layer_validation_accuracies":
                [r.validation_accuracy for r in reports],
        })
        if t == 0:
            kept = (model, reports, std, tr, te)

    model, reports, std, tr, te = kept
    accs = [p["final_accuracy"] for p in per_trial]
    best = per_trial[0]["best_layer"]

    out = opts["out"]
    _prepare_out(out)
    extras = {}
    meta = {"model_kind": opts["model"], "standardize": standardize,
            "data_format": data_format, "class_names": tr.class_names,
            "feature_names": tr.feature_names}
    if std is not None:
        extras = {"standardizer_mean": std.mean[None, :],
                  "standardizer_std": std.std[None, :]}
    save_model(model, f"{out}.model", extras=extras, meta=meta)
    report.write_layer_report(f"{out}.layers.tsv", reports, best)
    report.render_layer_figure(f"{out}.layers.png", reports,
                               title=f"{opts['model']} layer progression")
    summary = {
        "command": "train",
        "model": opts["model"],
        "options": _summary_options(opts),
        "train_size": len(tr),
        "test_size": len(te),
        "feature_dim": int(tr.features.shape[1]),
        "class_count": tr.class_count,
        "standardize": standardize,
        "per_trial": per_trial,
        "mean_accuracy": float(np.mean(accs)),
        "std_accuracy": float(np.std(accs)),
        "best_layer": best,
        "elapsed_seconds": time.time() - t0,
        "outputs": {
            "model": f"{out}.model",
            "layer_report": f"{out}.layers.tsv",
            "layer_figure": f"{out}.layers.png",
        },
    }
    report.write_json(f"{out}.summary.json", summary)
    for p in per_trial:
        print(f"trial {p['trial']} (seed {p['seed']}): "
              f"accuracy {p['final_accuracy']:.4f}")
    print(f"mean accuracy over {opts['trials']} trial(s): "
          f"{summary['mean_accuracy']:.4f} "
          f"+/- {summary['std_accuracy']:.4f}")
    print(f"wrote {out}.model, {out}.layers.tsv, {out}.layers.png, "
          f"{out}.summary.json")
    return 0


def cmd_eval(opts, model_path) -> int:
    t0 = time.time()
    model, extras, meta = load_container(model_path)
    paths = opts["dataset"]["paths"]
    if not paths:
        raise ConfigError("dataset.paths: eval needs a dataset")
    if _idx_magic(paths[0]) is not None:
        if len(paths) != 2:
            raise ConfigError("dataset.paths: IDX eval takes IMAGES LABELS")
        ds = data_io.load_idx(paths[0], paths[1])
    elif len(paths) == 1:
        ds = load_single_delimited(opts["dataset"], paths[0])
    else:
        raise ConfigError("dataset.paths: eval takes one delimited table "
                          "or one IDX pair")
    labels = _remap_labels(ds, meta, model.class_count)
    X = ds.features
    if "standardizer_mean" in extras:
        std = data_io.Standardizer(mean=extras["standardizer_mean"][0],
                                   std=extras["standardizer_std"][0])
        X = std.apply(X)

    layer_accs = []
    for _, P, _ in model_layer_states(model, X):
        layer_accs.append(float(np.mean(classify(P) == labels)))
    _, resp = forward_model(model, X)
    pred = classify(resp)
    final = float(np.mean(pred == labels))
    confusion = np.zeros((model.class_count, model.class_count), dtype=int)
    np.add.at(confusion, (labels, pred), 1)

    out = opts["out"]
    _prepare_out(out)
    rows = [[i + 1, a] for i, a in enumerate(layer_accs)]
    rows.append(["final", final])
    report.atomic_write_text(f"{out}.eval.tsv",
                             report.format_table(["layer", "accuracy"], rows))
    report.render_eval_figure(f"{out}.eval.png", layer_accs, final,
                              title=f"evaluation: {os.path.basename(model_path)}")
    summary = {
        "command": "eval",
        "model_file": model_path,
        "model_kind": meta.get("model_kind"),
        "dataset_size": len(ds),
        "layer_accuracies": layer_accs,
        "final_accuracy": final,
        "confusion_matrix": confusion.tolist(),
        "elapsed_seconds": time.time() - t0,
        "outputs": {"table": f"{out}.eval.tsv", "figure": f"{out}.eval.png"},
    }
    report.write_json(f"{out}.summary.json", summary)
    print(f"final accuracy: {final:.4f} "
          f"(layers: {', '.join(f'{a:.4f}' for a in layer_accs)})")
    print(f"wrote {out}.eval.tsv, {out}.eval.png, {out}.summary.json")
    return 0


def cmd_theory(opts) -> int:
    t0 = time.time()
    train, test, data_format = load_datasets(opts["dataset"])
    standardize = _resolve_standardize(opts, data_format)
    family, config = build_model_config(opts)

    std = data_io.fit_standardizer(train) if standardize else None
    X = std.apply(train.features) if std else train.features
    Y = encode_one_hot(train.labels, train.class_count)
    X_te = labels_te = None
    if test is not None:
        X_te = std.apply(test.features) if std else test.features
        labels_te = test.labels
    model, reports = fit_model(family, config, X, Y,
                               None if X_te is None else (X_te, labels_te),
                               opts["pairs"])

    trace = dynamics_trace(model, X, train.labels, X_te, labels_te,
                           sample_pairs=opts["pairs"], seed=opts["seed"])

    lams = model.config.layer_lambdas()
    span_rows = []
    checked = passed = 0
    for idx, (H, P, _) in enumerate(model_layer_states(model, X)):
        lam = lams[idx]
        if lam <= 0 or np.linalg.matrix_rank(H) >= H.shape[0]:
            continue  # guarantee vacuous at this layer
        for j in range(model.class_count):
            verdict = span_gain_check(H, Y.matrix[:, j], lam)
            ok = verdict.in_span or (verdict.residual_after
                                     <= verdict.residual_before + 1e-8)
            checked += 1
            passed += bool(ok)
            span_rows.append([idx + 1, j, int(verdict.in_span),
                              verdict.orthogonality_neg,
                              verdict.orthogonality_nonneg,
                              verdict.residual_before,
                              verdict.residual_after, int(ok)])

    out = opts["out"]
    _prepare_out(out)
    report.write_dynamics_table(f"{out}.dynamics.tsv", trace.train)
    if trace.test:
        report.write_dynamics_table(f"{out}.dynamics_test.tsv", trace.test)
    report.render_dynamics_figure(f"{out}.dynamics.png", trace.train,
                                  trace.test,
                                  title=f"{opts['model']} distance dynamics:")
    report.write_spangain_table(f"{out}.spangain.tsv", span_rows)
    gaps = [r.b_phys - r.w_phys for r in trace.train]
    summary = {
        "command": "theory",
        "model": opts["model"],
        "options": _summary_options(opts),
        "train_size": len(train),
        "test_size": None if test is None else len(test),
        "span_gain": {
            "checked": checked,
            "monotone": passed,
            "all_monotone": checked == passed,
        },
        "train_gap_by_layer": gaps,
        "gap_non_decreasing": bool(all(b >= a - 1e-12
                                       for a, b in zip(gaps, gaps[1:]))),
        "layer_train_accuracies": [r.train_accuracy for r in reports],
        "elapsed_seconds": time.time() - t0,
        "outputs": {
            "dynamics": f"{out}.dynamics.tsv",
            "dynamics_figure": f"{out}.dynamics.png",
            "span_gain": f"{out}.spangain.tsv",
        },
    }
    report.write_json(f"{out}.summary.json", summary)
    print(f"span-gain monotonicity: {passed}/{checked} checks passed")
    print(f"interclass-intraclass gap by layer: "
          f"{', '.join(f'{g:.4f}' for g in gaps)}")
    print(f"wrote {out}.dynamics.tsv, {out}.dynamics.png, "
          f"{out}.spangain.tsv, {out}.summary.json")
    return 0


def _summary_options(opts) -> dict:
    keep = dict(opts)
    keep["dataset"] = dict(opts["dataset"])
    return keep


# ---------------------------------------------------------------------------
# Argument parsing


def _add_common(sp):
    sp.add_argument("--config", help="JSON config file; flags override it")
    sp.add_argument("--dataset", nargs="+", metavar="PATH",
                    help="dataset paths (delimited: TRAIN [TEST]; "
                         "IDX: IMAGES LABELS [IMAGES LABELS])")
    sp.add_argument("--model", choices=MODEL_KINDS)
    sp.add_argument("--depth", type=int)
    sp.add_argument("--lambda", dest="lam", type=float,
                    help="per-layer ridge shrinkage")
    sp.add_argument("--gamma", type=float, help="RBF kernel width")
    sp.add_argument("--lambda-ft", dest="lambda_ft", type=float,
                    help="fine-tuning layer shrinkage")
    sp.add_argument("--beta-ft", dest="beta_ft", type=float,
                    help="power-regularization exponent in [0, 1]")
    sp.add_argument("--no-relu", action="store_true",
                    help="disable the ReLU on relearned features")
    sp.add_argument("--no-ft", action="store_true",
                    help="drop the fine-tuning output layer")
    sp.add_argument("--ft-classifier", dest="ft_classifier",
                    choices=("regression", "nn"))
    sp.add_argument("--trials", type=int,
                    help="seeded reshuffle trials (seed..seed+trials-1)")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--standardize", choices=("on", "off"))
    sp.add_argument("--pairs", type=int,
                    help="Monte-Carlo pairs for distance estimates")
    sp.add_argument("--out", help="output path stem")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="danet",
        description="Backprop-free stacked ridge-regression networks: "
                    "train, evaluate, and verify their theory empirically.")
    sub = p.add_subparsers(dest="command", required=True)
    tr = sub.add_parser("train", help="fit a model and write reports")
    _add_common(tr)
    ev = sub.add_parser("eval", help="evaluate a saved model on a dataset")
    ev.add_argument("model_file", help="serialized model container")
    _add_common(ev)
    th = sub.add_parser("theory", help="fit a model and trace its "
                                       "distance dynamics and span gains")
    _add_common(th)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        opts = resolve_options(args)
        if args.command == "train":
            return cmd_train(opts)
        if args.command == "eval":
            return cmd_eval(opts, args.model_file)
        return cmd_theory(opts)
    except DanetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
