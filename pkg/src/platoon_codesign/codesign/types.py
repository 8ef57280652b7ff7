"""Cost specification, synthesis results and their serialization."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from ..dissipativity import SubsystemCertificate
from ..platoon import GainSet, VehicleParams

__all__ = [
    "CostSpec",
    "Segment",
    "SynthesisResult",
    "Lemma1Box",
    "WssCertificate",
    "lemma1_region",
    "lemma1_check",
    "certify_weak_string_stability",
    "RESULT_VERSION",
]

RESULT_VERSION = 1


@dataclass
class CostSpec:
    """Communication and performance weights of the co-design objective.

    ``c`` is indexed by physical follower position (1-based positions map
    to row ``pos - 1``); ``None`` means the distance rule ``|i - j|``.
    Scalars in ``c0i``/``ci`` apply to every vehicle.
    """

    c: np.ndarray | None = None
    c0: float = 1.0
    c0i: float | Sequence[float] = 1.0
    ci: float | Sequence[float] = 1.0
    gamma_bar: float = 10.0

    def __post_init__(self):
        if self.c is not None:
            self.c = np.asarray(self.c, dtype=float)
            if self.c.ndim != 2 or self.c.shape[0] != self.c.shape[1]:
                raise ValueError("cost matrix must be square")
            if np.any(self.c < 0):
                raise ValueError("communication costs must be nonnegative")
            if np.any(np.diag(self.c) != 0):
                raise ValueError("cost matrix must have a zero diagonal")
        if not self.gamma_bar > 0:
            raise ValueError("gamma_bar must be positive")
        if self.c0 < 0:
            raise ValueError("c0 must be nonnegative")

    def pair(self, i: int, j: int) -> float:
        """Cost of follower at position ``i`` listening to position ``j``."""
        if i == j:
            return 0.0
        if self.c is None:
            return float(abs(i - j))
        return float(self.c[i - 1, j - 1])

    def matrix(self, n: int) -> np.ndarray:
        return np.array([[self.pair(i, j) for j in range(1, n + 1)]
                         for i in range(1, n + 1)])

    def c0_of(self, k: int) -> float:
        return float(self.c0i) if np.ndim(self.c0i) == 0 else float(self.c0i[k])

    def ci_of(self, k: int) -> float:
        return float(self.ci) if np.ndim(self.ci) == 0 else float(self.ci[k])

    def to_dict(self) -> dict:
        return {"c": None if self.c is None else self.c.tolist(),
                "c0": self.c0,
                "c0i": self.c0i if np.ndim(self.c0i) == 0 else list(self.c0i),
                "ci": self.ci if np.ndim(self.ci) == 0 else list(self.ci),
                "gamma_bar": self.gamma_bar}

    @classmethod
    def from_dict(cls, d: dict) -> "CostSpec":
        return cls(None if d.get("c") is None else np.array(d["c"]),
                   d.get("c0", 1.0), d.get("c0i", 1.0), d.get("ci", 1.0),
                   d.get("gamma_bar", 10.0))


@dataclass
class Segment:
    """One platoon: a leader (physical index, 0 = reference leader) and
    its followers in physical order."""

    leader: int
    followers: list[int]

    def to_dict(self) -> dict:
        return {"leader": self.leader, "followers": list(self.followers)}


@dataclass
class Lemma1Box:
    """Open box ``nu in (nu_lo, 0)``, ``rho~ in (0, rho_tilde_hi)``."""

    nu_lo: float
    rho_tilde_hi: float
    nu_hi: float = 0.0
    rho_tilde_lo: float = 0.0

    def contains(self, nu: float, rho_tilde: float) -> bool:
        return (self.nu_lo < nu < self.nu_hi
                and self.rho_tilde_lo < rho_tilde < self.rho_tilde_hi)


def lemma1_region(p: float, gamma_tilde: float) -> Lemma1Box:
    """Necessary passivity-index box for a node with weight ``p``."""
    if not p > 0:
        raise ValueError("p must be positive")
    return Lemma1Box(-gamma_tilde / p, min(p, 4.0 * gamma_tilde / p))


def lemma1_check(cert: SubsystemCertificate) -> bool:
    if not (cert.p > 0 and cert.rho > 0):
        return False
    return lemma1_region(cert.p, cert.gamma_tilde).contains(cert.nu,
                                                            cert.rho_tilde)


@dataclass
class WssCertificate:
    """Linear bound ``||e|| <= slope * ||w||`` from zero initial error."""

    slope: float
    gamma_tilde: float
    gamma_bar: float

    def to_dict(self) -> dict:
        return {"slope": self.slope, "gamma_tilde": self.gamma_tilde,
                "gamma_bar": self.gamma_bar}


@dataclass
class SynthesisResult:
    """Outcome of a centralized or decentralized co-design run.

    Per-follower arrays (``certs``, ``p``, ``gamma_hat``) and ``gains``
    are in physical order. ``order`` lists the physical positions in the
    order they were synthesized.
    """

    mode: str
    formulation: str
    params: list[VehicleParams]
    gains: GainSet
    certs: list[SubsystemCertificate]
    p: np.ndarray
    gamma_tilde: float
    costs: CostSpec
    gamma_hat: np.ndarray | None = None
    segments: list[Segment] = field(default_factory=list)
    order: list[int] = field(default_factory=list)
    reports: list[dict] = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    string_stability: bool = False
    config_hash: str | None = None
    version: int = 1

    @property
    def n(self) -> int:
        return self.gains.n

    @property
    def gamma(self) -> float:
        return float(np.sqrt(self.gamma_tilde))

    @property
    def gamma_bar(self) -> float:
        return self.costs.gamma_bar

    def supply_weights(self) -> np.ndarray:
        """Per-follower disturbance weights of the certified supply rate."""
        if self.gamma_hat is not None:
            return np.asarray(self.gamma_hat, dtype=float)
        return np.full(self.n, self.gamma_tilde)

    def edges(self) -> list[tuple[int, int]]:
        return sorted(self.gains.edges())

    # serialization ---------------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        return {
            "version": RESULT_VERSION,
            "mode": self.mode,
            "formulation": self.formulation,
            "config_hash": self.config_hash,
            "string_stability": self.string_stability,
            "gamma_tilde": self.gamma_tilde,
            "gamma": self.gamma,
            "gamma_hat": None if self.gamma_hat is None
            else [float(g) for g in self.gamma_hat],
            "p": [float(x) for x in self.p],
            "costs": self.costs.to_dict(),
            "params": [q.to_dict() for q in self.params],
            "certificates": [c.to_dict() for c in self.certs],
            "gains": self.gains.to_dict(),
            "segments": [s.to_dict() for s in self.segments],
            "order": list(self.order),
            "edges": [list(e) for e in self.edges()],
            "checks": self.checks,
            "reports": self.reports,
        }

    @classmethod
    def from_dict(cls, d: dict, validate: bool = True) -> "SynthesisResult":
        """Inverse of :meth:`to_dict`; ``validate=False`` skips the gain
        structure check so a faulty file can still be inspected."""
        try:
            return cls(
                mode=d["mode"], formulation=d["formulation"],
                params=[VehicleParams(**q) for q in d["params"]],
                gains=GainSet.from_dict(d["gains"], validate),
                certs=[SubsystemCertificate.from_dict(c)
                       for c in d["certificates"]],
                p=np.array(d["p"], dtype=float),
                gamma_tilde=float(d["gamma_tilde"]),
                costs=CostSpec.from_dict(d["costs"]),
                gamma_hat=None if d.get("gamma_hat") is None
                else np.array(d["gamma_hat"], dtype=float),
                segments=[Segment(s["leader"], list(s["followers"]))
                          for s in d.get("segments", [])],
                order=list(d.get("order", [])),
                reports=list(d.get("reports", [])),
                checks=dict(d.get("checks", {})),
                string_stability=bool(d.get("string_stability", False)),
                config_hash=d.get("config_hash"),
                version=int(d.get("version", RESULT_VERSION)))
        except (KeyError, TypeError, IndexError) as exc:
            raise ValueError(f"malformed result file: {exc!r}") from exc

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=1, default=_json_default)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_json(cls, text_or_path, validate: bool = True) -> "SynthesisResult":
        text = str(text_or_path)
        if not text.lstrip().startswith("{"):
            with open(text_or_path) as fh:
                text = fh.read()
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValueError(f"result file is not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ValueError("result file must hold a JSON object")
        return cls.from_dict(d, validate)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")


def certify_weak_string_stability(result: SynthesisResult) -> WssCertificate:
    """Disturbance-to-error bound with slope ``gamma_bar``.

    Raises
    ------
    ValueError
        If the achieved ``gamma_tilde`` does not lie below ``gamma_bar``.
    """
    if not (0 < result.gamma_tilde < result.gamma_bar):
        raise ValueError(
            f"no certificate: gamma_tilde={result.gamma_tilde:.4g} is not "
            f"below gamma_bar={result.gamma_bar:.4g}")
    return WssCertificate(result.gamma_bar, result.gamma_tilde,
                          result.gamma_bar)
