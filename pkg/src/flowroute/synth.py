"""Synthetic coupled SC/FC cohorts with planted group differences.

SC is a block-structured random backbone shared by every subject, with
per-subject multiplicative weight jitter. FC is the diffusion similarity of the
subject's SC: the heat kernel of the normalized Laplacian, rescaled to unit
diagonal, plus symmetric Gaussian noise. Patients additionally have the
demand between the endpoints of each planted edge scaled by ``1 + rho``.

Node features default to each region's FC row (``node_features="fc"``), the
usual regional attribute for connectome transformers. With ``"none"`` the
manifest carries no features and the model falls back to one-hot identity.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, GenerationError
from .graph import ConnectomePair, write_manifest, write_matrix_csv
from .resistance import n_components
from .rng import stream

MAX_BACKBONE_DRAWS = 100


@dataclass
class SynthSpec:
    n_nodes: int = 30
    n_per_class: int = 100
    blocks: int = 3
    p_in: float = 0.7
    p_out: float = 0.15
    weight_range: tuple[float, float] = (0.5, 2.0)
    jitter: float = 0.1
    diffusion_scale: float = 1.0
    n_planted: int = 6
    planted_edges: list[tuple[int, int]] | None = None
    rho: float = 1.0
    sigma: float = 0.05
    seed: int = 0
    node_features: str = "fc"  # or "none"

    def __post_init__(self):
        self.weight_range = tuple(float(w) for w in self.weight_range)
        if self.planted_edges is not None:
            self.planted_edges = [tuple(sorted(map(int, e))) for e in self.planted_edges]
        if self.n_nodes < 2 or self.n_per_class < 1 or self.blocks < 1:
            raise ConfigError("n_nodes >= 2, n_per_class >= 1 and blocks >= 1 are required")
        if self.rho < 0 or self.sigma < 0 or self.jitter < 0:
            raise ConfigError("rho, sigma and jitter must be nonnegative")
        if self.node_features not in ("fc", "none"):
            raise ConfigError(f"unknown node_features {self.node_features!r}")
        lo, hi = self.weight_range
        if not 0 < lo <= hi:
            raise ConfigError("weight_range must satisfy 0 < lo <= hi")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown synth spec keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["weight_range"] = list(self.weight_range)
        if self.planted_edges is not None:
            out["planted_edges"] = [list(e) for e in self.planted_edges]
        return out


@dataclass
class SynthCohort:
    spec: SynthSpec
    backbone: np.ndarray
    planted_edges: list[tuple[int, int]]
    subjects: list[ConnectomePair] = field(default_factory=list)


def block_backbone(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    n = spec.n_nodes
    block = np.arange(n) * spec.blocks // n
    same = block[:, None] == block[None, :]
    for _ in range(MAX_BACKBONE_DRAWS):
        prob = np.where(same, spec.p_in, spec.p_out)
        on = np.triu(rng.random((n, n)) < prob, k=1)
        w = np.triu(rng.uniform(*spec.weight_range, size=(n, n)), k=1) * on
        W = w + w.T
        if n_components(W) == 1:
            return W
    raise GenerationError(f"no connected backbone after {MAX_BACKBONE_DRAWS} draws")


def diffusion_similarity(sc: np.ndarray, scale: float) -> np.ndarray:
    """Heat kernel of the normalized Laplacian, rescaled to unit diagonal."""
    deg = sc.sum(axis=1)
    inv = 1.0 / np.sqrt(deg)
    Lnorm = np.eye(sc.shape[0]) - inv[:, None] * sc * inv[None, :]
    lam, V = np.linalg.eigh(0.5 * (Lnorm + Lnorm.T))
    K = (V * np.exp(-scale * lam)) @ V.T
    d = np.sqrt(np.diag(K))
    S = K / d[:, None] / d[None, :]
    return 0.5 * (S + S.T)


def subject_pair(
    spec: SynthSpec,
    backbone: np.ndarray,
    planted: list[tuple[int, int]],
    label: int,
    rng: np.random.Generator,
    sid: str,
) -> ConnectomePair:
    n = spec.n_nodes
    jit = np.triu(np.exp(spec.jitter * rng.standard_normal((n, n))), k=1)
    sc = backbone * (jit + jit.T)
    fc = diffusion_similarity(sc, spec.diffusion_scale)
    if label == 1 and spec.rho > 0:
        for i, j in planted:
            fc[i, j] *= 1.0 + spec.rho
            fc[j, i] = fc[i, j]
    noise = np.triu(rng.normal(0.0, spec.sigma, size=(n, n)), k=1) if spec.sigma > 0 else 0.0
    fc = fc + noise + np.transpose(noise)
    fc = np.clip(fc, -1.0, 1.0)
    np.fill_diagonal(fc, 1.0)
    feats = fc if spec.node_features == "fc" else None
    return ConnectomePair(sc=sc, fc=fc, features=feats, label=label, id=sid)


def generate_cohort(spec: SynthSpec) -> SynthCohort:
    rng = stream(spec.seed, "data")
    backbone = block_backbone(spec, rng)
    iu, ju = np.nonzero(np.triu(backbone, k=1))
    if spec.planted_edges is not None:
        planted = list(spec.planted_edges)
        for i, j in planted:
            if backbone[i, j] <= 0:
                raise ConfigError(f"planted edge ({i}, {j}) is not in the backbone")
    else:
        if spec.n_planted > iu.size:
            raise ConfigError("more planted edges requested than backbone edges")
        pick = np.sort(rng.choice(iu.size, size=spec.n_planted, replace=False))
        planted = [(int(iu[k]), int(ju[k])) for k in pick]
    cohort = SynthCohort(spec, backbone, planted)
    k = 0
    for label in (0, 1):
        for _ in range(spec.n_per_class):
            sid = f"sub-{k:04d}"
            cohort.subjects.append(
                subject_pair(spec, backbone, planted, label, stream(spec.seed, "data", k + 1), sid)
            )
            k += 1
    return cohort


def generate(spec: SynthSpec, out_dir: str | Path) -> SynthCohort:
    """Write per-subject CSVs, ``manifest.json`` and ``synth_spec.json`` into ``out_dir``."""
    out = Path(out_dir)
    (out / "subjects").mkdir(parents=True, exist_ok=True)
    cohort = generate_cohort(spec)
    entries = []
    for pair in cohort.subjects:
        sc_rel = f"subjects/{pair.id}_sc.csv"
        fc_rel = f"subjects/{pair.id}_fc.csv"
        write_matrix_csv(out / sc_rel, pair.sc)
        write_matrix_csv(out / fc_rel, pair.fc)
        feats = fc_rel if spec.node_features == "fc" else None
        entries.append({"id": pair.id, "sc": sc_rel, "fc": fc_rel, "features": feats, "label": pair.label})
    write_manifest(out / "manifest.json", entries)
    echo = spec.to_dict()
    echo["planted_edges"] = [list(e) for e in cohort.planted_edges]
    with open(out / "synth_spec.json", "w") as fh:
        json.dump(echo, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return cohort
