"""Strict YAML experiment configuration.

Unknown keys, type mismatches and domain violations are all rejected at
parse time; every diagnostic carries the dotted path of the offending key and,
when it can be located, its line in the source text.
"""

from __future__ import annotations

from typing import Annotated, Literal, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .model.laws import (ArrivalLaw, ConstantArrivals, Exponential, ParetoHazard, PerCountArrivals,
                         ScaledArrivals, ServiceLaw, TableHazard, Weibull, X0DecayFactor)
from .model.lyapunov import LyapunovParams
from .model.state import SystemState
from .simulator import MODES, SimulatorConfig

PosFloat = Annotated[float, Field(gt=0)]
NonNegFloat = Annotated[float, Field(ge=0)]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ConstantArrivalCfg(_Strict):
    kind: Literal["constant"]
    rate: NonNegFloat

    @model_validator(mode="after")
    def _check(self):
        if self.rate <= 0:
            raise ValueError("rate must be positive: the lower arrival bound on the empty "
                             "system has to be > 0")
        return self

    def build(self) -> ArrivalLaw:
        return ConstantArrivals(self.rate)


class PerCountArrivalCfg(_Strict):
    kind: Literal["per-count"]
    rates: list[NonNegFloat] = Field(min_length=1)
    tail: Literal["constant", "linear"] = "constant"
    slope: NonNegFloat | None = None

    @model_validator(mode="after")
    def _check(self):
        if self.rates[0] <= 0:
            raise ValueError("arrival rate on the empty system (rates[0]) must be positive: "
                             "the lower arrival bound on the empty system has to be > 0")
        if self.tail == "linear" and self.slope is None:
            raise ValueError("tail 'linear' needs a slope")
        return self

    def build(self) -> ArrivalLaw:
        return PerCountArrivals(self.rates, self.tail, self.slope)


class FactorArrivalCfg(_Strict):
    """``rate * max(n, 1) * (floor + (1 - floor) exp(-x0 / scale))``."""

    kind: Literal["count-times-factor"]
    rate: PosFloat
    floor: Annotated[float, Field(ge=0, le=1)]
    scale: PosFloat = 1.0

    @model_validator(mode="after")
    def _check(self):
        if self.floor <= 0:
            raise ValueError("floor must be positive: the lower arrival bound on the empty "
                             "system (rate * floor) has to be > 0")
        return self

    def build(self) -> ArrivalLaw:
        return ScaledArrivals(self.rate, X0DecayFactor(self.floor, self.scale))


class ParetoCfg(_Strict):
    kind: Literal["pareto-hazard"]
    alpha: Annotated[float, Field(gt=1)]

    def build(self) -> ServiceLaw:
        return ParetoHazard(self.alpha)


class ExponentialCfg(_Strict):
    kind: Literal["exponential"]
    rate: PosFloat

    def build(self) -> ServiceLaw:
        return Exponential(self.rate)


class WeibullCfg(_Strict):
    kind: Literal["weibull"]
    shape: PosFloat
    scale: PosFloat

    def build(self) -> ServiceLaw:
        return Weibull(self.shape, self.scale)


class TableCfg(_Strict):
    kind: Literal["table"]
    knots: list[tuple[NonNegFloat, NonNegFloat]] = Field(min_length=1)

    @model_validator(mode="after")
    def _check(self):
        TableHazard(self.knots)
        return self

    def build(self) -> ServiceLaw:
        return TableHazard(self.knots)


ArrivalCfg = Annotated[Union[ConstantArrivalCfg, PerCountArrivalCfg, FactorArrivalCfg],
                       Field(discriminator="kind")]
ServiceCfg = Annotated[Union[ParetoCfg, ExponentialCfg, WeibullCfg, TableCfg],
                       Field(discriminator="kind")]


class ModelCfg(_Strict):
    arrival: ArrivalCfg
    service: ServiceCfg


class LyapunovCfg(_Strict):
    C0: PosFloat
    m: Annotated[float, Field(gt=1)]
    a: Annotated[float, Field(gt=1)]
    ell: PosFloat
    k: PosFloat

    @model_validator(mode="after")
    def _check(self):
        if not self.k < self.ell:
            raise ValueError(f"k must lie in (0, ell); got k={self.k}, ell={self.ell}")
        return self

    def build(self) -> LyapunovParams:
        return LyapunovParams(self.C0, self.m, self.a, self.ell, self.k)


class StateCfg(_Strict):
    x0: NonNegFloat = 0.0
    elapsed: list[NonNegFloat] = []

    def build(self) -> SystemState:
        return SystemState(self.x0, tuple(self.elapsed))


class SimCfg(_Strict):
    seed: Annotated[int, Field(ge=0, lt=2**64)] = 0
    horizon: PosFloat = 50.0
    replicas: Annotated[int, Field(ge=1)] = 1000
    snapshot_times: list[NonNegFloat] | None = None
    mode: Literal[MODES] = "agenda"  # type: ignore[valid-type]
    max_events: Annotated[int, Field(ge=1)] = 10_000_000
    window: PosFloat = 1.0
    initial: StateCfg = StateCfg()

    @model_validator(mode="after")
    def _check(self):
        s = self.snapshot_times or []
        if s != sorted(s):
            raise ValueError("snapshot_times must be sorted")
        if s and s[-1] > self.horizon:
            raise ValueError("snapshot_times must not exceed the horizon")
        return self

    def build(self, horizon: float | None = None, snapshot_times=None) -> SimulatorConfig:
        snaps = self.snapshot_times if snapshot_times is None else snapshot_times
        if snaps is None:
            snaps = [self.horizon]
        return SimulatorConfig(self.seed, self.horizon if horizon is None else horizon, self.mode,
                               tuple(snaps), self.max_events, self.window)


class BinnerCfg(_Strict):
    scheme: Literal["by-count", "by-count-and-mean-elapsed"] = "by-count"
    width: PosFloat = 1.0
    cap: Annotated[int, Field(ge=0)] = 10


class StationaryCfg(_Strict):
    cycles: Annotated[int, Field(ge=1)] = 10_000
    binner: BinnerCfg = BinnerCfg()
    long_run_horizon: PosFloat | None = None
    burn_in: NonNegFloat = 0.0


class HittingCfg(_Strict):
    initial_states: list[StateCfg] | None = None
    moment_order: NonNegFloat | None = None


class CouplingCfg(_Strict):
    horizon: PosFloat = 1000.0
    runs: Annotated[int, Field(ge=1)] = 1000
    y_initial: Union[Literal["stationary"], StateCfg] = "stationary"
    pool_cycles: Annotated[int, Field(ge=1)] = 2000
    grid: list[NonNegFloat] | None = None


class ConvergenceCfg(_Strict):
    times: list[NonNegFloat] = [1.0, 2.0, 5.0, 10.0, 20.0]
    replicas: Annotated[int, Field(ge=1)] = 10_000
    bootstrap: Annotated[int, Field(ge=10)] = 200


class DriftCheckCfg(_Strict):
    samples: Annotated[int, Field(ge=1)] = 10_000
    max_n: Annotated[int, Field(ge=1)] = 20
    max_elapsed: PosFloat = 1000.0
    envelope_samples: Annotated[int, Field(ge=0)] = 10_000


class ConstantsCfg(_Strict):
    N: NonNegFloat = 4.0


class ExperimentConfig(_Strict):
    model: ModelCfg
    lyapunov: LyapunovCfg | None = None
    sim: SimCfg = SimCfg()
    stationary: StationaryCfg = StationaryCfg()
    hitting: HittingCfg = HittingCfg()
    coupling: CouplingCfg = CouplingCfg()
    convergence: ConvergenceCfg = ConvergenceCfg()
    drift_check: DriftCheckCfg = DriftCheckCfg()
    constants: ConstantsCfg = ConstantsCfg()
    output_dir: str = "out"

    def arrival(self) -> ArrivalLaw:
        return self.model.arrival.build()

    def service(self) -> ServiceLaw:
        return self.model.service.build()

    def to_dict(self) -> dict:
        return self.model_dump(mode="json")

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


class ConfigError(ValueError):
    """Invalid configuration; ``diagnostics`` lists ``path: message (line N)`` entries."""

    def __init__(self, diagnostics: list[str]):
        super().__init__("\n".join(diagnostics))
        self.diagnostics = diagnostics


def _node_line(node, path) -> int | None:
    line = None
    for key in path:
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                if k.value == key:
                    line = k.start_mark.line + 1
                    node = v
                    break
            else:
                return line
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            return line
    return line if line is not None else (node.start_mark.line + 1 if node is not None else None)


def validate_config(text: str) -> ExperimentConfig:
    """Parse and validate YAML text; raise ``ConfigError`` with located diagnostics."""
    try:
        data = yaml.safe_load(text)
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
        raise ConfigError([f"<document>: YAML syntax error{where}: {getattr(exc, 'problem', exc)}"])
    if not isinstance(data, dict):
        raise ConfigError(["<document>: top level must be a mapping"])
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        diags = []
        for err in exc.errors():
            # drop discriminator tags pydantic inserts into union paths
            path = [p for p in err["loc"] if not (isinstance(p, str) and p in _UNION_TAGS)]
            line = _node_line(root, path)
            dotted = ".".join(str(p) for p in path) or "<document>"
            where = f" (line {line})" if line else ""
            diags.append(f"{dotted}: {err['msg']}{where}")
        raise ConfigError(diags)


_UNION_TAGS = {"constant", "per-count", "count-times-factor", "pareto-hazard", "exponential",
               "weibull", "table", "StateCfg", "literal['stationary']", "function-after[_check(), StateCfg]"}


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return validate_config(fh.read())
