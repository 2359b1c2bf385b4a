"""Single-file INI run configuration.

Sections: ``[run]`` (seed, deterministic), ``[proposer]``, ``[train]``, ``[post]``,
``[synth]`` and ``[paths]``. Anything left out takes its default. Command-line
flags override the file.
"""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .postprocess import PostprocessConfig, StructuringElement
from .proposer import ProposerConfig
from .synth import SynthConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


def _format(value) -> str:
    if isinstance(value, StructuringElement):
        return value.to_rows()
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(repr(x) for x in value)
    return value if isinstance(value, str) else repr(value)


def _parse(default, text: str, key: str):
    text = text.strip()
    try:
        if isinstance(default, StructuringElement):
            return StructuringElement.from_rows(text)
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(text)
            return low in ("1", "true", "yes", "on")
        if isinstance(default, tuple):
            return tuple(float(x) for x in text.split(","))
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {text!r}") from exc


def _section(cls, raw: dict[str, str], name: str, skip=()):
    base = cls()
    known = {f.name for f in fields(cls)} - set(skip)
    kwargs = {}
    for key, text in raw.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in [{name}]")
        kwargs[key] = _parse(getattr(base, key), text, f"{name}.{key}")
    try:
        return replace(base, **kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from exc


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    deterministic: bool = True
    proposer: ProposerConfig = field(default_factory=ProposerConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    post: PostprocessConfig = field(default_factory=PostprocessConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    paths: dict = field(default_factory=dict)

    def __post_init__(self):
        # run-level seed and determinism are authoritative for training
        object.__setattr__(self, "train", replace(self.train, seed=self.seed, deterministic=self.deterministic))

    def with_overrides(self, seed: int | None = None, deterministic: bool | None = None) -> "RunConfig":
        return replace(
            self,
            seed=self.seed if seed is None else seed,
            deterministic=self.deterministic if deterministic is None else deterministic,
        )

    def dumps(self) -> str:
        out = ["[run]", f"seed = {self.seed}", f"deterministic = {_format(self.deterministic)}", ""]
        for name, obj, skip in (
            ("proposer", self.proposer, ()),
            ("train", self.train, ("seed", "deterministic")),
            ("post", self.post, ()),
            ("synth", self.synth, ()),
        ):
            out.append(f"[{name}]")
            out += [f"{f.name} = {_format(getattr(obj, f.name))}" for f in fields(obj) if f.name not in skip]
            out.append("")
        out.append("[paths]")
        out += [f"{k} = {v}" for k, v in sorted(self.paths.items())]
        return "\n".join(out) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()

    @classmethod
    def loads(cls, text: str, source: str = "<string>") -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text, source)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        unknown = set(parser.sections()) - {"run", "proposer", "train", "post", "synth", "paths"}
        if unknown:
            raise ConfigError(f"unknown section(s) in {source}: {', '.join(sorted(unknown))}")
        run = dict(parser["run"]) if parser.has_section("run") else {}
        bad = set(run) - {"seed", "deterministic"}
        if bad:
            raise ConfigError(f"unknown key(s) in [run]: {', '.join(sorted(bad))}")
        get = lambda s: dict(parser[s]) if parser.has_section(s) else {}  # noqa: E731
        return cls(
            seed=_parse(0, run.get("seed", "0"), "run.seed"),
            deterministic=_parse(True, run.get("deterministic", "true"), "run.deterministic"),
            proposer=_section(ProposerConfig, get("proposer"), "proposer"),
            train=_section(TrainConfig, get("train"), "train", skip=("seed", "deterministic")),
            post=_section(PostprocessConfig, get("post"), "post"),
            synth=_section(SynthConfig, get("synth"), "synth"),
            paths=get("paths"),
        )

    @classmethod
    def load(cls, path: str | Path | None) -> "RunConfig":
        if path is None:
            return cls()
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        return cls.loads(path.read_text(), str(path))
