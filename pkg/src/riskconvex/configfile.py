"""key = value configuration files.

One assignment per line, ``#`` starts a comment, blank lines are
ignored.  Every subcommand declares its schema; unknown keys are errors,
as are values that do not parse at the declared type.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigError


def _parse_bool(raw: str):
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_list(item_parser):
    def parse(raw: str):
        parts = [p.strip() for p in raw.split(",") if p.strip() != ""]
        return [item_parser(p) for p in parts]

    return parse


PARSERS = {
    "int": int,
    "float": float,
    "str": lambda raw: raw.strip(),
    "bool": _parse_bool,
    "list[int]": _parse_list(int),
    "list[float]": _parse_list(float),
}


def parse_config(path, schema: dict) -> dict:
    """Parse a key = value file against a {key: type_name} schema.

    Returns only the keys present in the file; callers supply defaults.
    Unknown keys, repeated keys, and unparseable values are errors
    naming the line.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    out = {}
    for line_no, line in enumerate(text.split("\n"), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}, line {line_no}: expected 'key = value'")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in schema:
            known = ", ".join(sorted(schema))
            raise ConfigError(f"{path}, line {line_no}: unknown key {key!r} (known: {known})")
        if key in out:
            raise ConfigError(f"{path}, line {line_no}: key {key!r} assigned twice")
        parser = PARSERS[schema[key]]
        try:
            out[key] = parser(raw)
        except ValueError as exc:
            raise ConfigError(
                f"{path}, line {line_no}: bad value for {key!r} "
                f"(expected {schema[key]}): {exc}"
            ) from exc
    return out


def load_config(path, schema: dict, defaults: dict) -> dict:
    """Merged defaults and file values; path may be None for defaults only."""
    merged = dict(defaults)
    if path is not None:
        merged.update(parse_config(path, schema))
    return merged
