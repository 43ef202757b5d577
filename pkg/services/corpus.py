"""Корпус полиномиальных патчей для проверки оценок на графиках.

Каждая запись: m, n, r, число узлов и список мономов
{"component": a, "powers": [...], "coef": c}. Для полиномов есть точный
символьный оракул, поэтому корпус используется и в тестах, и в verify.
"""

import itertools
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple

import numpy as np

from services.graphgeom import MIN_NODES, GraphPatch

logger = logging.getLogger(__name__)

Term = Tuple[int, Tuple[int, ...], float]


@dataclass(frozen=True)
class PolynomialPatchSpec:
    m: int
    n: int
    radius: float
    nodes: int
    terms: Tuple[Term, ...]
    label: str = ""

    @property
    def degree(self) -> int:
        return max((sum(powers) for _, powers, _ in self.terms), default=0)

    def evaluate(self, coords: np.ndarray) -> np.ndarray:
        coords = np.asarray(coords, dtype=float)
        out = np.zeros(coords.shape[:-1] + (self.n,))
        for component, powers, coef in self.terms:
            monomial = np.ones(coords.shape[:-1])
            for axis, power in enumerate(powers):
                if power:
                    monomial = monomial * coords[..., axis] ** power
            out[..., component] += coef * monomial
        return out

    def to_patch(self) -> GraphPatch:
        return GraphPatch.sample(self.evaluate, self.m, self.n, self.radius, self.nodes, self.label)

    def to_record(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "m": self.m,
            "n": self.n,
            "r": self.radius,
            "nodes": self.nodes,
            "terms": [
                {"component": c, "powers": list(p), "coef": coef} for c, p, coef in self.terms
            ],
        }

    @classmethod
    def from_record(cls, record: Dict[str, Any]) -> "PolynomialPatchSpec":
        problems = []
        m, n = int(record.get("m", 0)), int(record.get("n", 0))
        nodes = int(record.get("nodes", 0))
        radius = float(record.get("r", 0.0))
        if m < 1 or n < 1:
            problems.append("m and n must be >= 1")
        if nodes < MIN_NODES:
            problems.append(f"nodes must be >= {MIN_NODES}")
        if radius <= 0:
            problems.append("r must be > 0")
        terms: List[Term] = []
        for raw in record.get("terms", []):
            powers = tuple(int(p) for p in raw["powers"])
            component = int(raw.get("component", 0))
            if len(powers) != m or not 0 <= component < max(n, 1):
                problems.append(f"bad term {raw}")
                continue
            terms.append((component, powers, float(raw["coef"])))
        if problems:
            label = record.get("label", "?")
            raise ValueError(f"patch record {label}: " + "; ".join(problems))
        return cls(m=m, n=n, radius=radius, nodes=nodes, terms=tuple(terms),
                   label=str(record.get("label", "")))


def monomial_powers(m: int, degree: int) -> List[Tuple[int, ...]]:
    return [
        powers
        for powers in itertools.product(range(degree + 1), repeat=m)
        if sum(powers) <= degree
    ]


def random_patch_specs(
    count: int,
    seed: int,
    degree: int = 4,
    radius: float = 0.5,
    nodes_by_dim: Dict[int, int] | None = None,
    dims: Sequence[int] = (1, 2, 3),
) -> List[PolynomialPatchSpec]:
    """Детерминированный (по seed) набор случайных полиномиальных патчей."""
    nodes_by_dim = nodes_by_dim or {1: 9, 2: 9, 3: 7}
    rng = np.random.default_rng(seed)
    specs = []
    for index in range(count):
        m = int(rng.choice(dims))
        n = int(rng.choice(dims))
        deg = int(rng.integers(1, degree + 1))
        terms: List[Term] = []
        for component in range(n):
            for powers in monomial_powers(m, deg):
                coef = float(rng.uniform(-1.0, 1.0))
                if sum(powers) == 0 or rng.random() < 0.5:
                    continue
                terms.append((component, powers, coef))
        specs.append(
            PolynomialPatchSpec(
                m=m, n=n, radius=radius, nodes=int(nodes_by_dim[m]),
                terms=tuple(terms), label=f"random-{seed}-{index}",
            )
        )
    return specs


def load_patch_corpus(path: str | Path) -> List[PolynomialPatchSpec]:
    records = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(records, list) or not records:
        raise ValueError("patch corpus must be a non-empty JSON array")
    specs = [PolynomialPatchSpec.from_record(record) for record in records]
    logger.info("Loaded %d patch records from %s", len(specs), path)
    return specs


def dump_patch_corpus(specs: Iterable[PolynomialPatchSpec], path: str | Path) -> None:
    payload = [spec.to_record() for spec in specs]
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
