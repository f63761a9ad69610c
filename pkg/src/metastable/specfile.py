"""JSON spec and measure files.

A spec file lists states and directed edges with ``prefactor`` and ``cost``
(numbers, or strings such as ``"1/3"`` for exact rationals), or names a
built-in model. Unknown fields are rejected.

Example::

    {"schema": "metastable-spec/1",
     "states": [0, 1],
     "edges": [{"source": 0, "target": 1, "prefactor": 1, "cost": 1},
               {"source": 1, "target": 0, "prefactor": 1, "cost": 0}],
     "options": {"probes": [12, 18], "precision": 256}}
"""
from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ModelError, SpecParseError
from .models import Landscape, landscape_spec
from .scale_algebra import AsymScalar, RateSpec, as_number

SCHEMA = "metastable-spec/1"

Number = Union[int, float, str]
Label = Union[int, str]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class EdgeEntry(_Strict):
    source: Label
    target: Label
    prefactor: Number = 1
    cost: Number = 0


class PrefactorEntry(_Strict):
    source: int
    target: int
    prefactor: Number


class LandscapeModel(_Strict):
    type: Literal["landscape"]
    energies: list[Number] = Field(min_length=2)
    prefactors: list[PrefactorEntry] = []


class Options(_Strict):
    probes: Optional[tuple[float, float]] = None
    precision: Optional[int] = Field(default=None, ge=64)
    tol_cost: Optional[float] = Field(default=None, gt=0)
    tol_decompose: Optional[float] = Field(default=None, gt=0)
    probe_agreement: Optional[float] = Field(default=None, gt=0)


class SpecFile(_Strict):
    schema_: Literal["metastable-spec/1"] = Field(alias="schema")
    name: Optional[str] = None
    states: Optional[list[Label]] = None
    edges: Optional[list[EdgeEntry]] = None
    model: Optional[LandscapeModel] = None
    labels: dict[str, str] = {}
    options: Options = Options()

    @model_validator(mode="after")
    def _one_source(self):
        if (self.edges is None) == (self.model is None):
            raise ValueError("give either 'edges' (with 'states') or 'model', not both")
        if self.edges is not None and self.states is None:
            raise ValueError("'edges' requires 'states'")
        return self

    def to_spec(self) -> RateSpec:
        try:
            if self.model is not None:
                pref = {(e.source, e.target): as_number(e.prefactor) for e in self.model.prefactors}
                return landscape_spec(Landscape(tuple(self.model.energies)), pref)
            edges = {}
            for e in self.edges:
                key = (e.source, e.target)
                if key in edges:
                    raise ModelError(f"duplicate edge {key}")
                edges[key] = AsymScalar(e.prefactor, e.cost)
            return RateSpec(tuple(self.states), edges)
        except (ValueError, ZeroDivisionError) as exc:
            raise SpecParseError(str(exc)) from None

    def state_names(self, spec: RateSpec) -> dict:
        """Display names keyed by state (labels map ``str(state)`` to a name)."""
        return {s: self.labels[str(s)] for s in spec.states if str(s) in self.labels}


def read_spec_file(path: str | Path) -> SpecFile:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise SpecParseError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise SpecParseError(f"{path}: invalid JSON ({exc})") from None
    try:
        return SpecFile.model_validate(raw)
    except ValidationError as exc:
        raise SpecParseError(f"{path}: {exc}") from None


def load_spec(path: str | Path) -> tuple[RateSpec, SpecFile]:
    doc = read_spec_file(path)
    return doc.to_spec(), doc


def spec_to_document(spec: RateSpec, name: str | None = None) -> dict:
    """Serialise a spec; rationals are written as ``"p/q"`` strings."""
    def num(v):
        if isinstance(v, Fraction):
            return v.numerator if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
        return v
    doc = {"schema": SCHEMA}
    if name:
        doc["name"] = name
    doc["states"] = list(spec.states)
    doc["edges"] = [{"source": x, "target": y, "prefactor": num(r.prefactor), "cost": num(r.cost)}
                    for (x, y), r in spec.edges.items()]
    return doc


class MeasureFile(_Strict):
    weights: dict[str, Number]


def load_measure(path: str | Path, spec: RateSpec, names: dict | None = None) -> dict:
    """Read ``{"weights": {state: mass}}``; keys may be state labels or display names."""
    try:
        doc = MeasureFile.model_validate(json.loads(Path(path).read_text()))
    except OSError as exc:
        raise SpecParseError(f"cannot read {path}: {exc.strerror}") from None
    except (json.JSONDecodeError, ValidationError) as exc:
        raise SpecParseError(f"{path}: {exc}") from None
    lookup = {str(s): s for s in spec.states}
    lookup.update({v: k for k, v in (names or {}).items()})
    out = {}
    for key, value in doc.weights.items():
        if key not in lookup:
            raise SpecParseError(f"{path}: unknown state {key!r}")
        v = as_number(value)
        if v < 0:
            raise SpecParseError(f"{path}: negative mass at {key!r}")
        out[lookup[key]] = v
    total = sum(out.values())
    if not total > 0:
        raise SpecParseError(f"{path}: measure has no mass")
    return {s: v / total for s, v in out.items()}
