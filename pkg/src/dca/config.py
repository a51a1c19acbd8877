"""Experiment description read by the ``dca`` command line tool."""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Mode = Literal["simulate", "train", "gradcheck", "interpolate"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RuleConfig(_Strict):
    """Exactly one source: ``wolfram``, ``file``, ``weights``, ``init`` or ``table``."""

    wolfram: Optional[int] = Field(None, ge=0, le=255)
    file: Optional[str] = None
    weights: Optional[list] = None
    init: Optional[Literal["normal", "zeros"]] = None
    init_scale: float = Field(0.1, gt=0)
    table: Optional[Union[str, list[Optional[float]]]] = None
    alphas: Optional[list[float]] = None
    parameterization: Literal["softmax", "sigmoid"] = "sigmoid"

    @model_validator(mode="after")
    def _one_source(self):
        given = [k for k in ("wolfram", "file", "weights", "init", "table")
                 if getattr(self, k) is not None]
        if len(given) != 1:
            raise ValueError(f"rule needs exactly one source, got {given or 'none'}")
        if self.alphas is not None and self.table is None:
            raise ValueError("alphas only apply to an interpolation table")
        for a in self.alphas or ():
            if not 0.0 <= a <= 1.0:
                raise ValueError(f"alpha {a} outside [0, 1]")
        return self

    @property
    def source(self) -> str:
        return next(k for k in ("wolfram", "file", "weights", "init", "table")
                    if getattr(self, k) is not None)


class TopologyConfig(_Strict):
    n: int = Field(63, ge=1)
    offsets: list[int] = [-1, 0, 1]


class RandomInit(_Strict):
    count: int = Field(1, ge=1)
    p: float = Field(0.5, ge=0.0, le=1.0)


class InitialConfig(_Strict):
    """Exactly one of ``bits``, ``centered``, ``file`` or ``random``."""

    bits: Optional[str] = None
    centered: bool = False
    file: Optional[str] = None
    random: Optional[RandomInit] = None

    @field_validator("bits")
    @classmethod
    def _bits(cls, v):
        if v is not None and (not v or set(v) - set("01")):
            raise ValueError("bits must be a non-empty string of 0 and 1")
        return v

    @model_validator(mode="after")
    def _one_source(self):
        given = [k for k, on in (("bits", self.bits is not None), ("centered", self.centered),
                                 ("file", self.file is not None),
                                 ("random", self.random is not None)) if on]
        if len(given) != 1:
            raise ValueError(f"initial configuration needs exactly one source, got {given or 'none'}")
        return self


class TargetConfig(_Strict):
    kind: Literal["majority", "discrete_rule_after_n_steps", "fixed_configuration"] = "majority"
    wolfram: Optional[int] = Field(None, ge=0, le=255)
    bits: Optional[str] = None

    @model_validator(mode="after")
    def _payload(self):
        if self.kind == "discrete_rule_after_n_steps" and self.wolfram is None:
            raise ValueError("discrete_rule_after_n_steps target needs 'wolfram'")
        if self.kind == "fixed_configuration" and self.bits is None:
            raise ValueError("fixed_configuration target needs 'bits'")
        return self


class OptimizerConfig(_Strict):
    rate: float = Field(0.5, gt=0)
    momentum: float = Field(0.0, ge=0, lt=1)
    iterations: int = Field(2000, ge=0)


class GradcheckConfig(_Strict):
    h: float = Field(1e-6, gt=0)
    tolerance: float = Field(1e-5, gt=0)
    floor: float = Field(1e-8, gt=0)


class OutputConfig(_Strict):
    dir: str = "out"


class ExperimentConfig(_Strict):
    mode: Optional[Mode] = None
    rule: RuleConfig
    topology: TopologyConfig = TopologyConfig()
    initial: InitialConfig = InitialConfig(centered=True)
    steps: int = Field(31, ge=0)
    target: TargetConfig = TargetConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    gradcheck: GradcheckConfig = GradcheckConfig()
    seed: Optional[int] = Field(None, ge=0)
    outputs: OutputConfig = OutputConfig()

    def check_mode(self, mode: str, base_dir: Path) -> None:
        """Mode-dependent requirements and file existence."""
        if self.mode is not None and self.mode != mode:
            raise ValueError(f"config is for mode {self.mode!r}, command is {mode!r}")
        src = self.rule.source
        if mode == "interpolate" and src != "table":
            raise ValueError("interpolate needs rule.table")
        if mode in ("train", "gradcheck"):
            if src not in ("init", "weights", "file"):
                raise ValueError(f"{mode} needs a weight-parameterized rule (init, weights or file)")
            if self.steps < 1:
                raise ValueError(f"{mode} needs steps >= 1")
        if mode == "simulate" and self.rule.table is not None and len(self.rule.alphas or []) != 1:
            raise ValueError("simulate with a table needs exactly one alpha")
        if mode == "simulate" and self.initial.random is not None and self.initial.random.count != 1:
            raise ValueError("simulate runs a single initial configuration")
        for ref in (self.rule.file, self.initial.file):
            if ref is not None and not (base_dir / ref).is_file():
                raise ValueError(f"referenced file not found: {ref}")
        n = self.topology.n
        for name, bits in (("initial.bits", self.initial.bits), ("target.bits", self.target.bits)):
            if bits is not None and len(bits) != n:
                raise ValueError(f"{name} has length {len(bits)}, ring has {n} cells")
