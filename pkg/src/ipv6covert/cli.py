"""Command-line front end: profile, generate, inject, extract, featurize, train, evaluate, pipeline."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .channels import (CLASS_ORDER, COVERT_CHANNELS, ChannelKind, HopLimitAlphabet,
                       extract_address, extract_flowlabel, extract_hoplimit, extract_length,
                       symbols_to_message)
from .crypto import DEFAULT_ASCII_SHIFT, KEY_ENV_VAR, SharedSecret
from .dataset import (LabeledCapture, MixConfig, attach_labels, build_mixed_dataset,
                      generate_background, inject, read_label_csv, write_label_csv)
from .errors import CovertError
from .features import (FEATURE_NAMES, NormalizationParams, apply_normalization, extract_features,
                       fit_normalization, read_feature_csv, write_feature_csv)
from .ml import (BoostingParams, ForestParams, binary_labels, evaluate, load_model,
                 run_two_stage_pipeline, save_model, train_gradient_boosting, train_random_forest)
from .ml.pipeline import COVERT_LABEL
from .pcap_io import read_pcap, write_pcap
from .profile import profile_capture, write_profile

logger = logging.getLogger("ipv6covert")

BINARY_CLASSES = (ChannelKind.NORMAL.value, COVERT_LABEL)


# --- helpers ---------------------------------------------------------------

def _secret(args) -> SharedSecret:
    """Key from --key-hex, else the environment. The key itself is never printed."""
    if args.key_hex:
        return SharedSecret.from_strings(args.key_hex, args.sequence, args.shift)
    return SharedSecret.from_env(args.sequence, args.shift)


def _load_capture(path: str, labels_path: Optional[str]) -> LabeledCapture:
    read = read_pcap(path)
    if read.skipped:
        logger.warning("%s: skipped %d non-IPv6 record(s)", path, read.skipped)
    if labels_path is None:
        return LabeledCapture.from_background(read.packets)
    labels, prov = read_label_csv(labels_path)
    if len(labels) != len(read.packets):
        raise ValueError(f"{labels_path} has {len(labels)} rows but {path} has {len(read.packets)} packets")
    return attach_labels(read.packets, labels, prov)


def _write_capture(cap: LabeledCapture, pcap_path: str, labels_path: Optional[str]) -> None:
    write_pcap(cap.packets, pcap_path)
    if labels_path:
        write_label_csv(cap, labels_path)


def _normalize_for(model, X: np.ndarray, names: Sequence[str]) -> np.ndarray:
    if tuple(names) != tuple(model.feature_names):
        raise ValueError("feature columns do not match the model's training columns")
    if model.normalization is None:
        return X
    return apply_normalization(X, NormalizationParams.from_dict(model.normalization))


def _task_labels(model, labels: Sequence[ChannelKind]) -> list[str]:
    if tuple(model.classes) == BINARY_CLASSES:
        return binary_labels(labels)
    return [lab.value for lab in labels]


# --- commands --------------------------------------------------------------

def cmd_profile(args) -> int:
    read = read_pcap(args.inp)
    report = profile_capture(read.packets)
    for path in write_profile(report, args.out):
        logger.info("wrote %s", path)
    print(report.summary())
    return 0


def cmd_generate(args) -> int:
    if args.config:
        config = MixConfig.from_file(args.config)
    else:
        config = MixConfig.scaled_reference(args.scale_divisor, args.seed)
    if any(config.covert_counts.values()):
        cap = build_mixed_dataset(config, _secret(args))
    else:
        cap = generate_background(config)
    _write_capture(cap, args.out, args.labels)
    hist = cap.label_histogram()
    print(f"wrote {len(cap)} packets to {args.out}: "
          + ", ".join(f"{k.value} {hist[k]}" for k in CLASS_ORDER))
    return 0


def _read_message(args) -> bytes:
    if args.message_file:
        with open(args.message_file, "rb") as fh:
            return fh.read()
    return args.message.encode("utf-8")


def cmd_inject(args) -> int:
    channel = ChannelKind.parse(args.channel)
    cap = _load_capture(args.inp, args.in_labels)
    message = _read_message(args)
    out = inject(cap, channel, message, _secret(args), seed=args.seed,
                 alphabet=HopLimitAlphabet(args.alphabet))
    _write_capture(out, args.out, args.labels)
    touched = sum(1 for a in out.labels if a is channel) - sum(1 for a in cap.labels if a is channel)
    print(f"hid {len(message)} bytes in {touched} {channel.value} carrier(s); wrote {args.out}")
    return 0


def cmd_extract(args) -> int:
    channel = ChannelKind.parse(args.channel)
    if channel is ChannelKind.NORMAL:
        raise ValueError("choose a covert channel to extract")
    cap = _load_capture(args.inp, args.labels)
    packets = cap.packets
    if args.labels:
        packets = [p for p, lab in zip(cap.packets, cap.labels) if lab is channel]
    if not packets:
        raise ValueError(f"no {channel.value} carriers found in {args.inp}")
    if channel is ChannelKind.HOPLIMIT:
        alphabet = HopLimitAlphabet(args.alphabet)
        symbols = extract_hoplimit(packets, alphabet)
        bad = [i for i, s in enumerate(symbols) if s is None]
        if bad:
            raise ValueError(f"{len(bad)} carrier hop limit(s) fit no symbol band (first at carrier {bad[0]})")
        if args.length is not None:
            length = args.length
        elif alphabet.mode == "binary":
            length = len(symbols) // 8
        else:
            length = _ternary_bytes(len(symbols))
        message = symbols_to_message(symbols, length, alphabet)
    else:
        secret = _secret(args)
        if channel is ChannelKind.FLOWLABEL:
            message = extract_flowlabel(packets, secret, args.length)
        else:
            per = 2 if channel is ChannelKind.LENGTH else 8
            length = args.length if args.length is not None else per * len(packets)
            fn = extract_length if channel is ChannelKind.LENGTH else extract_address
            message = fn(packets, secret, length)
    print(f"hex: {message.hex()}")
    print(f"text: {message.decode('utf-8', errors='replace')}")
    return 0


def _ternary_bytes(n_trits: int) -> int:
    # largest byte count whose ternary encoding fits in n_trits digits
    length = 0
    while 256 ** (length + 1) <= 3 ** n_trits:
        length += 1
    return length


def cmd_featurize(args) -> int:
    cap = _load_capture(args.inp, args.labels)
    X = extract_features(cap.packets)
    write_feature_csv(X, cap.labels, args.out)
    print(f"wrote {X.shape[0]} feature rows x {X.shape[1]} columns to {args.out}")
    return 0


def cmd_train(args) -> int:
    X, labels, names = read_feature_csv(args.inp)
    if not 0 < args.train_fraction < 1:
        raise ValueError("--train-fraction must be strictly between 0 and 1")
    cut = int(np.floor(len(labels) * args.train_fraction))
    if cut == 0 or cut == len(labels):
        raise ValueError(f"{len(labels)} rows leave an empty train or test split")
    if args.task == "binary":
        y, classes = binary_labels(labels), BINARY_CLASSES
    else:
        y, classes = [lab.value for lab in labels], tuple(k.value for k in CLASS_ORDER)
    norm = fit_normalization(X[:cut], names)
    Xtr, Xte = apply_normalization(X[:cut], norm), apply_normalization(X[cut:], norm)
    present = [c for c in classes if c in set(y[:cut])]
    if args.model == "rf":
        params = ForestParams(n_trees=args.trees, max_depth=args.depth, seed=args.seed, n_jobs=args.jobs)
        model = train_random_forest(Xtr, y[:cut], params, classes=present, feature_names=names)
    else:
        params = BoostingParams(n_rounds=args.rounds, learning_rate=args.learning_rate,
                                max_depth=args.depth or 3, seed=args.seed)
        model = train_gradient_boosting(Xtr, y[:cut], params, classes=present, feature_names=names)
    model.normalization = norm.to_dict()
    save_model(model, args.out)
    cm, report = evaluate(model.predict(Xte), y[cut:], classes)
    print(f"{args.model} {args.task}: trained on {cut} rows, tested on {len(y) - cut}; model saved to {args.out}")
    if args.task == "binary":
        print(f"covert F1 {report.f1(COVERT_LABEL):.4f}")
    print(cm.format())
    print(report.format())
    return 0


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    X, labels, names = read_feature_csv(args.inp)
    X = _normalize_for(model, X, names)
    y = _task_labels(model, labels)
    classes = BINARY_CLASSES if tuple(model.classes) == BINARY_CLASSES else tuple(k.value for k in CLASS_ORDER)
    cm, report = evaluate(model.predict(X), y, classes)
    print(cm.format())
    print(report.format())
    return 0


def cmd_pipeline(args) -> int:
    binary, multi = load_model(args.binary_model), load_model(args.multiclass_model)
    cap = _load_capture(args.inp, args.labels)
    raw = extract_features(cap.packets)
    Xb = _normalize_for(binary, raw, FEATURE_NAMES)
    Xm = _normalize_for(multi, raw, FEATURE_NAMES)
    if not np.array_equal(Xb, Xm):
        raise ValueError("binary and multiclass models were fitted with different feature scaling")
    verdicts = run_two_stage_pipeline(binary, multi, Xb, FEATURE_NAMES)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["packet_index", "verdict"])
        for i, v in enumerate(verdicts):
            w.writerow([i, v.value])
    counts = {k: 0 for k in CLASS_ORDER}
    for v in verdicts:
        counts[v] += 1
    print(f"wrote {len(verdicts)} verdicts to {args.out}: "
          + ", ".join(f"{k.value} {counts[k]}" for k in CLASS_ORDER))
    if args.labels:
        cm, report = evaluate(verdicts, cap.labels, CLASS_ORDER)
        print(cm.format())
        print(report.format())
    return 0


# --- parser ----------------------------------------------------------------

def _add_secret(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("shared secret")
    g.add_argument("--key-hex", help=f"RC4 key as hex (default: ${KEY_ENV_VAR})")
    g.add_argument("--sequence", help="16 hex digits giving the FlowLabel sequence-id permutation")
    g.add_argument("--shift", type=int, default=DEFAULT_ASCII_SHIFT, help="Length-channel byte shift")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ipv6covert", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    channels = [k.value for k in COVERT_CHANNELS]

    p = sub.add_parser("profile", help="hop-limit, Traffic Class and FlowLabel profile of a capture")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True, help="output directory for CSV tables and summary")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("generate", help="synthesize a labeled capture")
    p.add_argument("--out", required=True, help="output pcap")
    p.add_argument("--labels", help="output label CSV")
    p.add_argument("--config", help="key=value mix file (normal, hoplimit, address, length, flowlabel, seed)")
    p.add_argument("--scale-divisor", type=float, default=100.0,
                   help="without --config, scale the reference mix down by this factor")
    p.add_argument("--seed", type=int, default=42)
    _add_secret(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("inject", help="hide a message in a capture")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--in-labels", help="label CSV of the input capture")
    p.add_argument("--channel", required=True, choices=channels)
    msg = p.add_mutually_exclusive_group(required=True)
    msg.add_argument("--message")
    msg.add_argument("--message-file")
    p.add_argument("--alphabet", choices=("binary", "ternary"), default="binary")
    p.add_argument("--out", required=True)
    p.add_argument("--labels", help="output label CSV")
    p.add_argument("--seed", type=int, default=42)
    _add_secret(p)
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("extract", help="recover a hidden message")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--channel", required=True, choices=channels)
    p.add_argument("--labels", help="label CSV; selects carriers of --channel")
    p.add_argument("--length", type=int, help="message length in bytes")
    p.add_argument("--alphabet", choices=("binary", "ternary"), default="binary")
    _add_secret(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("featurize", help="per-packet feature CSV")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="train on the leading split, report on the rest")
    p.add_argument("--in", dest="inp", required=True, help="feature CSV")
    p.add_argument("--model", choices=("rf", "gb"), default="rf")
    p.add_argument("--task", choices=("binary", "multiclass"), default="binary")
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--rounds", type=int, default=100)
    p.add_argument("--depth", type=int, help="tree depth limit (rf: unlimited, gb: 3)")
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--train-fraction", type=float, default=0.75)
    p.add_argument("--jobs", type=int, default=1, help="threads for forest training")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True, help="model file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a saved model on a feature CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", help="two-stage verdicts for every packet of a capture")
    p.add_argument("--binary-model", required=True)
    p.add_argument("--multiclass-model", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--labels", help="label CSV; adds metrics against ground truth")
    p.add_argument("--out", required=True, help="verdict CSV")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (CovertError, ValueError, OSError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"ipv6covert {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
