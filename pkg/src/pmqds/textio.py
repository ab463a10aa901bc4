"""Plain ``key=value`` text: configuration files in, records and counts out.

Floats are written with ``repr`` so that everything read back is bit-identical.
"""

from __future__ import annotations

import dataclasses
import math
from pathlib import Path
from typing import Iterable, Mapping

from .domain import LABELS, ChannelModel, DecoyCounts, Label, PairObservation, ProtocolParams, SecurityTargets, Tally


class ConfigError(ValueError):
    """Malformed configuration; the message names the file, line and field."""


def parse_kv(text: str, source: str = "<string>") -> dict[str, tuple[str, int]]:
    """Parse ``key=value`` lines; ``#`` starts a comment.  Values keep their line numbers."""
    out: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} (first on line {out[key][1]})")
        out[key] = (value, lineno)
    return out


def read_kv(path: str | Path) -> dict[str, tuple[str, int]]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    return parse_kv(text, str(path))


def _fill(cls, kv: Mapping[str, tuple[str, int]], source: str, base=None, allowed: Iterable[str] | None = None):
    names = {f.name: f for f in dataclasses.fields(cls)}
    allowed = set(allowed) if allowed is not None else set(names)
    values = {}
    for key, (raw, lineno) in kv.items():
        if key not in allowed:
            raise ConfigError(f"{source}:{lineno}: unknown field {key!r} for {cls.__name__}")
        try:
            values[key] = int(raw) if names[key].type in (int, "int") else float(raw)
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: field {key!r}: cannot parse {raw!r} as a number") from None
    try:
        return dataclasses.replace(base, **values) if base is not None else cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_channel(path: str | Path | None) -> ChannelModel:
    """Channel parameters from a key=value file; missing keys keep their defaults."""
    if path is None:
        return ChannelModel()
    return _fill(ChannelModel, read_kv(path), str(path), base=ChannelModel())


def load_targets(path: str | Path | None) -> SecurityTargets:
    if path is None:
        return SecurityTargets()
    return _fill(SecurityTargets, read_kv(path), str(path), base=SecurityTargets())


def load_params(path: str | Path | None, base: ProtocolParams) -> ProtocolParams:
    if path is None:
        return base
    return _fill(ProtocolParams, read_kv(path), str(path), base=base)


def params_from_kv(kv: Mapping[str, tuple[str, int]], source: str, base: ProtocolParams) -> ProtocolParams:
    return _fill(ProtocolParams, kv, source, base=base)


def fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float) or hasattr(value, "dtype"):
        v = float(value)
        return repr(v) if math.isfinite(v) else str(v)
    return str(value)


def format_record(items: Iterable[tuple[str, object]]) -> str:
    return "".join(f"{k}={fmt(v)}\n" for k, v in items)


def counts_items(counts: DecoyCounts, pair: PairObservation | None = None, prefix: str = "") -> list[tuple[str, object]]:
    items = []
    for who, side in (("B", counts.bob), ("C", counts.charlie)):
        for lab in LABELS:
            t = side[lab]
            for f in ("sent", "n", "n_c", "m_c"):
                items.append((f"{prefix}{who}.{lab.value}.{f}", float(getattr(t, f))))
    if pair is not None:
        for f in ("sample", "mismatches", "population"):
            items.append((f"{prefix}pair.{f}", float(getattr(pair, f))))
    return items


def parse_counts(kv: Mapping[str, tuple[str, int]], source: str = "<counts>",
                 prefix: str = "") -> tuple[DecoyCounts, PairObservation | None]:
    """Inverse of ``counts_items``; other keys are ignored."""

    def get(key):
        full = prefix + key
        if full not in kv:
            raise ConfigError(f"{source}: missing field {full!r}")
        raw, lineno = kv[full]
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: field {full!r}: cannot parse {raw!r}") from None

    sides = {}
    for who in ("B", "C"):
        side = {}
        for lab in LABELS:
            try:
                side[lab] = Tally(*(get(f"{who}.{lab.value}.{f}") for f in ("sent", "n", "n_c", "m_c")))
            except ValueError as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"{source}: {who}.{lab.value}: {exc}") from None
        sides[who] = side
    pair = None
    if prefix + "pair.sample" in kv:
        pair = PairObservation(get("pair.sample"), get("pair.mismatches"), get("pair.population"))
    return DecoyCounts(sides["B"], sides["C"]), pair


def params_items(p: ProtocolParams, prefix: str = "params.") -> list[tuple[str, object]]:
    return [(prefix + f.name, getattr(p, f.name)) for f in dataclasses.fields(p)]


def label_key(lab: Label) -> str:
    return lab.value
