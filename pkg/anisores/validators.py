from __future__ import annotations

import configparser
import hashlib
import typing
from typing import Any, Dict, List, Type

from pydantic import BaseModel
from pydantic import ValidationError as PydanticValidationError

from anisores.config import RunConfig, RunSection
from anisores.exceptions import ConfigError

__all__ = ["parse_config", "apply_overrides", "serialize_config", "config_hash", "SECTION_MODELS"]

SECTION_MODELS: Dict[str, Type[BaseModel]] = {
    name: typing.cast(Type[BaseModel], field.annotation)
    for name, field in RunConfig.model_fields.items()
}


def _is_list_field(model: Type[BaseModel], key: str) -> bool:
    annotation = model.model_fields[key].annotation
    return typing.get_origin(annotation) in (list, List)


def _coerce(model: Type[BaseModel], key: str, raw: str) -> Any:
    value = raw.strip()
    if value.lower() == "none":
        return None
    if key in model.model_fields and _is_list_field(model, key):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


def parse_config(text: str) -> RunConfig:
    """
    Parse an INI-like ``key = value`` document into a validated RunConfig.
    Every violation is collected and reported together, each named by its key path.
    """
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    parser.optionxform = str  # type: ignore[assignment,method-assign]
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"Malformed configuration: {e}", violations=[str(e)]) from e

    violations: List[str] = []
    sections: Dict[str, Any] = {}

    for name in parser.sections():
        if name not in SECTION_MODELS:
            violations.append(f"{name}: unknown section")
            continue
        model = SECTION_MODELS[name]
        data = {key: _coerce(model, key, raw) for key, raw in parser.items(name)}
        try:
            sections[name] = model(**data)
        except PydanticValidationError as e:
            for err in e.errors():
                path = ".".join([name] + [str(part) for part in err["loc"]])
                violations.append(f"{path}: {err['msg']}")

    if violations:
        raise ConfigError(
            f"Configuration has {len(violations)} violation(s)",
            violations=violations,
            key_path=violations[0].split(":")[0],
        )

    return _validated(sections)


def _validated(sections: Dict[str, Any]) -> RunConfig:
    violations: List[str] = []
    try:
        return RunConfig(**sections)
    except PydanticValidationError as e:
        for err in e.errors():
            msg = str(err["msg"]).removeprefix("Value error, ")
            violations.extend(part.strip() for part in msg.split(";") if part.strip())
        raise ConfigError(
            f"Configuration has {len(violations)} violation(s)",
            violations=violations,
            key_path=violations[0].split(":")[0] if violations else None,
        ) from e


def apply_overrides(config: RunConfig, **run: Any) -> RunConfig:
    """Replace ``run`` section values (experiment, seed, output) and revalidate."""
    sections = {name: getattr(config, name) for name in SECTION_MODELS}
    updates = {key: value for key, value in run.items() if value is not None}
    try:
        sections["run"] = RunSection(**{**config.run.model_dump(), **updates})
    except PydanticValidationError as e:
        violations = [
            ".".join(["run"] + [str(part) for part in err["loc"]]) + f": {err['msg']}"
            for err in e.errors()
        ]
        raise ConfigError(
            f"Configuration has {len(violations)} violation(s)",
            violations=violations,
            key_path=violations[0].split(":")[0],
        ) from e
    return _validated(sections)


def _format(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ", ".join(_format(item) for item in value)
    return str(value)


def serialize_config(config: RunConfig) -> str:
    """Write a RunConfig back to the ``key = value`` format accepted by parse_config."""
    lines: List[str] = []
    for name in SECTION_MODELS:
        section = getattr(config, name)
        lines.append(f"[{name}]")
        for key, value in section.model_dump().items():
            lines.append(f"{key} = {_format(value)}")
        lines.append("")
    return "\n".join(lines)


def config_hash(config: RunConfig) -> str:
    """SHA-256 of the canonical serialization."""
    return hashlib.sha256(serialize_config(config).encode("utf-8")).hexdigest()
