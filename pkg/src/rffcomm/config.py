"""Plain-text experiment configuration.

Format::

    # comment
    experiment = ldpc_ber
    seed = 7
    variants = none, rff, ddrff

    [ldpc_ber]
    snr_db = 0, 1, 2

Top-level keys are shared by every experiment; each experiment reads its own
section.  Validation collects every problem before reporting, with line
numbers, so one run of the parser shows the whole list.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from types import MappingProxyType

from .errors import ConfigError

__all__ = ["EXPERIMENTS", "ExperimentConfig", "parse_config", "parse_config_text"]

log = logging.getLogger(__name__)

EXPERIMENTS = ("kernel_bench", "losnlos", "ldpc_ber")
VARIANTS = ("none", "rff", "ddrff")


class _Bad(ValueError):
    pass


def _int(lo=None, hi=None):
    def conv(text):
        try:
            v = int(text, 10)
        except ValueError:
            raise _Bad(f"expected an integer, got {text!r}") from None
        if lo is not None and v < lo:
            raise _Bad(f"must be >= {lo}, got {v}")
        if hi is not None and v > hi:
            raise _Bad(f"must be <= {hi}, got {v}")
        return v
    return conv


def _float(lo=None, strict=False):
    def conv(text):
        try:
            v = float(text)
        except ValueError:
            raise _Bad(f"expected a number, got {text!r}") from None
        if not math.isfinite(v):
            raise _Bad(f"must be finite, got {text!r}")
        if lo is not None and (v <= lo if strict else v < lo):
            raise _Bad(f"must be {'>' if strict else '>='} {lo}, got {v}")
        return v
    return conv


def _choice(*options):
    def conv(text):
        if text not in options:
            raise _Bad(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return conv


def _bool(text):
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise _Bad(f"expected true/false, got {text!r}")


def _named_or_positive(name):
    """Either the literal ``name`` or a positive number."""
    def conv(text):
        if text == name:
            return name
        return _float(0.0, strict=True)(text)
    return conv


def _list(item, min_len=1):
    def conv(text):
        parts = [p.strip() for p in text.split(",")]
        if any(p == "" for p in parts):
            raise _Bad("empty list element")
        if len(parts) < min_len:
            raise _Bad(f"needs at least {min_len} element(s)")
        return tuple(item(p) for p in parts)
    return conv


def _point(text):
    parts = text.split()
    if len(parts) != 2:
        raise _Bad(f"expected 'x y', got {text!r}")
    return tuple(_float()(p) for p in parts)


def _text(text):
    return text


REQUIRED = object()

# key -> (converter, default)
COMMON = {
    "experiment": (_choice(*EXPERIMENTS), REQUIRED),
    "seed": (_int(0, 2**64 - 1), REQUIRED),
    "variants": (_list(_choice(*VARIANTS)), None),  # default depends on the experiment
    "workers": (_int(1), 1),
}

SECTIONS = {
    "kernel_bench": {
        "n_features": (_list(_int(1)), (100, 1000, 10000)),
        "n_seeds": (_int(1), 20),
        "n_pairs": (_int(1), 100),
        "input_dim": (_int(1), 2),
        "sigma": (_float(0.0, strict=True), 1.0),
        "bandwidth": (_named_or_positive("silverman"), "silverman"),
    },
    "losnlos": {
        "scenario": (_choice("C1", "D1"), "C1"),
        "train_sizes": (_list(_int(2)), (100, 200, 400)),
        "roc_train_size": (_int(2), 400),
        "n_seeds": (_int(1), 10),
        "train_start": (_point, (200.0, 120.0)),
        "test_starts": (_list(_point), ((300.0, 250.0), (450.0, 500.0))),
        "test_length": (_int(2), 6000),
        "step_size": (_float(0.0, strict=True), 1.0),
        "chunk_length": (_int(1), 50),
        "n_subcarriers": (_int(1), 100),
        "rician_k_db": (_float(), 6.0),
        "coherence": (_int(1), 10),
        "n_features": (_int(1), 200),
        "n_hidden": (_int(1), 50),
        "epochs": (_int(1), 300),
        "learning_rate": (_float(0.0, strict=True), 0.05),
        "gradient_clip": (_float(0.0, strict=True), 5.0),
    },
    "ldpc_ber": {
        "snr_db": (_list(_float()), (0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0)),
        "n_seeds": (_int(1), 10),
        "info_bits": (_int(1), 10_000),
        "max_outer": (_int(1), 5),
        "max_inner": (_int(1), 50),
        "ridge": (_float(0.0), 1e-3),
        "channel": (_choice("rapp", "linear"), "rapp"),
        "v_sat": (_float(0.0, strict=True), 0.4),
        "knee": (_float(0.0, strict=True), 2.0),
        "memory_alpha": (_float(0.0), 0.2),
        "gain": (_float(0.0, strict=True), 1.0),
        "backoff": (_float(0.0, strict=True), 1.0),
        "noiseless": (_bool, False),
        "kernel_width": (_named_or_positive("median"), "median"),
        "bandwidth": (_named_or_positive("silverman"), "silverman"),
        "trace": (_bool, False),
        "base_matrix": (_text, ""),
        "lift": (_int(1), 27),
    },
}

POINT_KEYS = ("train_start",)

DEFAULT_VARIANTS = {
    "kernel_bench": ("rff", "ddrff"),
    "losnlos": ("none", "rff", "ddrff"),
    "ldpc_ber": ("none", "rff", "ddrff"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int
    variants: tuple
    workers: int = 1
    params: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))

    def __getitem__(self, key):
        return self.params[key]

    def __reduce__(self):
        # mappingproxy does not pickle; worker processes need the config
        return _rebuild, (self.experiment, self.seed, self.variants, self.workers, dict(self.params))

    def with_seed(self, seed: int) -> "ExperimentConfig":
        if not 0 <= int(seed) < 2**64:
            raise ConfigError([f"seed must be in [0, 2^64), got {seed}"])
        return ExperimentConfig(self.experiment, int(seed), self.variants, self.workers, self.params)

    def resolved_lines(self) -> list:
        """``key = value`` lines that reproduce this configuration exactly."""
        lines = [
            f"experiment = {self.experiment}",
            f"seed = {self.seed}",
            f"variants = {', '.join(self.variants)}",
            f"workers = {self.workers}",
            "",
            f"[{self.experiment}]",
        ]
        for k, v in self.params.items():
            text = " ".join(repr(c) for c in v) if k in POINT_KEYS else _render(v)
            lines.append(f"{k} = {text}")
        return lines


def _rebuild(experiment, seed, variants, workers, params):
    return ExperimentConfig(experiment, seed, variants, workers, MappingProxyType(params))


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ", ".join(" ".join(repr(c) for c in p) for p in value)
        return ", ".join(_render(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc.strerror}"]) from None
    return parse_config_text(text, source=str(path))


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    errors = []
    entries = {}  # (section, key) -> (raw value, line number)
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                errors.append(f"{source}:{lineno}: malformed section header {line!r}")
                continue
            section = line[1:-1].strip()
            if section not in SECTIONS:
                errors.append(f"{source}:{lineno}: unknown section [{section}]")
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            errors.append(f"{source}:{lineno}: expected 'key = value', got {line!r}")
            continue
        if (section, key) in entries:
            first = entries[(section, key)][1]
            errors.append(f"{source}:{lineno}: duplicate key {key!r} (first set on line {first}, again on line {lineno})")
            continue
        entries[(section, key)] = (value, lineno)

    def convert(key, conv, where):
        value, lineno = entries[where]
        try:
            return conv(value)
        except _Bad as exc:
            errors.append(f"{source}:{lineno}: {key}: {exc}")
            return None

    common = {}
    for key, (conv, default) in COMMON.items():
        if (None, key) in entries:
            common[key] = convert(key, conv, (None, key))
        elif default is REQUIRED:
            errors.append(f"{source}: missing required key {key!r}")
        else:
            common[key] = default
    for (sec, key), (_, lineno) in entries.items():
        if sec is None and key not in COMMON:
            errors.append(f"{source}:{lineno}: unknown key {key!r}")

    experiment = common.get("experiment")
    params = {}
    if experiment in SECTIONS:
        schema = SECTIONS[experiment]
        for key, (conv, default) in schema.items():
            if (experiment, key) in entries:
                params[key] = convert(key, conv, (experiment, key))
            else:
                params[key] = default
                shown = " ".join(map(repr, default)) if key in POINT_KEYS else _render(default)
                log.info("%s: %s = %s (default)", experiment, key, shown)
        for (sec, key), (_, lineno) in entries.items():
            if sec is None or sec not in SECTIONS:
                continue
            if sec != experiment:
                errors.append(f"{source}:{lineno}: key {key!r} is in section [{sec}] but experiment is {experiment}")
            elif key not in schema:
                errors.append(f"{source}:{lineno}: unknown key {key!r} in section [{sec}]")
        if common.get("variants") is None and (None, "variants") not in entries:
            common["variants"] = DEFAULT_VARIANTS[experiment]
            log.info("variants = %s (default)", ", ".join(common["variants"]))
        _cross_check(experiment, common, params, entries, errors, source)

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(
        experiment=experiment,
        seed=common["seed"],
        variants=tuple(dict.fromkeys(common["variants"])),
        workers=common["workers"],
        params=MappingProxyType(params),
    )


def _cross_check(experiment, common, params, entries, errors, source):
    def where(key, sec=experiment):
        hit = entries.get((sec, key))
        return f"{source}:{hit[1]}" if hit else source

    variants = common.get("variants") or ()
    if experiment == "kernel_bench" and "none" in variants:
        errors.append(f"{where('variants', None)}: variant 'none' has no kernel estimate in kernel_bench")
    if experiment == "losnlos":
        sizes = params.get("train_sizes") or ()
        if params.get("roc_train_size") is not None and sizes and params["roc_train_size"] not in sizes:
            errors.append(f"{where('roc_train_size')}: roc_train_size {params['roc_train_size']} is not in train_sizes")
    if experiment == "ldpc_ber":
        alpha = params.get("memory_alpha")
        if alpha is not None and alpha >= 1.0:
            errors.append(f"{where('memory_alpha')}: memory_alpha must be < 1, got {alpha}")
