from __future__ import annotations

from pathlib import Path
from typing import List, Literal, Optional

import toml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.backend.engine import EvalConfig
from src.backend.syntax import parse_fact
from src.backend.tools import RunOptions

EmitKind = Literal["surface", "core", "plan"]


class ManifestError(ValueError):
    """A run manifest that cannot be read or does not validate."""


class RunManifest(BaseModel):
    """Everything one batch run needs: inputs, knobs, rewrites and dumps."""

    model_config = ConfigDict(extra="forbid")

    program: Path
    facts: List[Path] = Field(default_factory=list)
    out: Optional[Path] = None
    workers: int = Field(1, ge=1)
    buckets: Optional[int] = Field(None, ge=1)
    subbuckets: int = Field(1, ge=1)
    max_iterations: Optional[int] = Field(None, ge=1)
    max_fact_height: Optional[int] = Field(None, ge=1)
    eager_why: bool = False
    where: bool = False
    lazy_why: Optional[str] = None
    emit: List[EmitKind] = Field(default_factory=list)
    oracle: bool = False

    def eval_config(self) -> EvalConfig:
        try:
            return EvalConfig(
                workers=self.workers,
                buckets=self.buckets,
                subbuckets=self.subbuckets,
                max_iterations=self.max_iterations,
                max_fact_height=self.max_fact_height,
            )
        except ValueError as exc:
            raise ManifestError(str(exc)) from exc

    def run_options(self) -> RunOptions:
        target = parse_fact(self.lazy_why) if self.lazy_why else None
        return RunOptions(
            eager_why=self.eager_why,
            where=self.where,
            lazy_target=target,
            config=self.eval_config(),
        )

    def relative_to(self, base: Path) -> "RunManifest":
        """Resolve relative paths against ``base`` (the manifest's directory)."""

        def fix(path: Path) -> Path:
            return path if path.is_absolute() else base / path

        return self.model_copy(
            update={
                "program": fix(self.program),
                "facts": [fix(path) for path in self.facts],
                "out": fix(self.out) if self.out is not None else None,
            }
        )


def load_manifest(path: Path) -> RunManifest:
    path = Path(path)
    try:
        data = toml.load(path)
    except (OSError, toml.TomlDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    try:
        manifest = RunManifest.model_validate(data)
    except ValidationError as exc:
        raise ManifestError(f"invalid manifest {path}: {exc}") from exc
    return manifest.relative_to(path.parent)


def looks_like_manifest(path: Path) -> bool:
    return Path(path).suffix == ".toml"
