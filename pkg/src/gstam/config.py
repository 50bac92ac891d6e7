"""Flat ``key = value`` configuration files with dotted namespaces.

Example::

    # desk run with a stronger regularizer
    train.lam = 0.03
    train.epochs = 60
    synth.p_occ = 0.3

Values are Python literals (numbers, strings, lists, ``True``/``False``,
``None``); anything that does not parse as a literal is kept as a bare string.
Later lines override earlier ones.
"""

from __future__ import annotations

import ast
from dataclasses import fields
from pathlib import Path

from .errors import ConfigError, ParseError
from .synthdata import SynthConfig
from .trainer import TrainConfig

NAMESPACES = {"train": TrainConfig, "synth": SynthConfig}


def known_keys() -> list:
    return sorted(f"{ns}.{f.name}" for ns, cls in NAMESPACES.items() for f in fields(cls))


def _literal(text: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_config(text: str) -> dict:
    """``{namespace: {field: value}}`` from config text.  Unknown keys raise ``ConfigError``."""
    out = {ns: {} for ns in NAMESPACES}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        set_key(out, key, _literal(value))
    return out


def set_key(conf: dict, key: str, value):
    ns, _, name = key.partition(".")
    cls = NAMESPACES.get(ns)
    if cls is None or name not in {f.name for f in fields(cls)}:
        raise ConfigError(f"unknown config key {key!r}")
    conf.setdefault(ns, {})[name] = value


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not a text file", 0) from exc
    return parse_config(text)


def parse_overrides(pairs) -> dict:
    """``["train.lam=0.03", ...]`` from repeated ``--set`` flags."""
    out = {ns: {} for ns in NAMESPACES}
    for item in pairs or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = (s.strip() for s in item.split("=", 1))
        set_key(out, key, _literal(value))
    return out


def merge(*confs) -> dict:
    out = {ns: {} for ns in NAMESPACES}
    for c in confs:
        for ns, vals in (c or {}).items():
            out.setdefault(ns, {}).update(vals)
    return out


def build_synth(values: dict) -> SynthConfig:
    try:
        return SynthConfig(**values)
    except TypeError as exc:
        raise ConfigError(f"synth config: {exc}") from exc


def build_train(values: dict, full_scale=False) -> TrainConfig:
    try:
        return TrainConfig(**values) if full_scale else TrainConfig.desk(**values)
    except TypeError as exc:
        raise ConfigError(f"train config: {exc}") from exc


def format_config(train: TrainConfig | None = None, synth: SynthConfig | None = None) -> str:
    """Config text that :func:`parse_config` reads back to the same values."""
    lines = []
    for ns, obj in (("synth", synth), ("train", train)):
        if obj is None:
            continue
        for k, v in obj.to_dict().items():
            lines.append(f"{ns}.{k} = {v!r}")
    return "\n".join(lines) + "\n"
