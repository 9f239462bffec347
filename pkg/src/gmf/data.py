"""Data containers, CSV ingestion, and model persistence.

Containers are plain dataclasses wrapping numpy arrays.  They are
treated as immutable during a fit sweep (fitters copy before writing),
so they are safe to share read-only across threads.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    InputError,
    ParseError,
    ShapeMismatchError,
    SplitInfeasibleError,
    UnsupportedFamilyError,
    VersionMismatchError,
)
from .families import Family, get_family

MODEL_FORMAT_VERSION = 1


@dataclass
class ResponseData:
    """Response matrix with observation mask, covariates, and family.

    y : (n, m) responses; unobserved cells hold 0.
    mask : (n, m) boolean, True = observed.
    x : (n, d) covariates, excluding the intercept (d may be 0).
    """

    y: np.ndarray
    mask: np.ndarray
    x: np.ndarray
    family: Family

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.x is None:
            self.x = np.zeros((self.y.shape[0], 0))
        self.x = np.asarray(self.x, dtype=float)
        if self.mask.shape != self.y.shape:
            raise ShapeMismatchError("mask shape differs from response shape")
        if self.x.shape[0] != self.y.shape[0]:
            raise ShapeMismatchError("covariate rows differ from response rows")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def m(self) -> int:
        return self.y.shape[1]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def validate(self):
        """Check fitting preconditions; raises InputError on violation."""
        if not self.mask.any(axis=1).all():
            raise InputError("every row needs at least one observed cell")
        if not self.mask.any(axis=0).all():
            raise InputError("every column needs at least one observed cell")
        self.family.check_response(self.y, self.mask)
        if self.d > 0:
            spans = self.x.max(axis=0) - self.x.min(axis=0)
            if np.any(spans == 0):
                raise InputError(
                    "covariate matrix has a constant column; the intercept is separate"
                )

    def with_mask(self, mask: np.ndarray) -> "ResponseData":
        return ResponseData(self.y, mask, self.x, self.family)


@dataclass
class ModelParams:
    """GLLVM parameters: intercepts, coefficients, loadings, scores, dispersions.

    beta0 : (m,) intercepts
    b     : (d, m) covariate coefficients
    lam   : (p, m) loadings (columns are per-response loading vectors)
    u     : (n, p) latent scores
    phi   : (m,) dispersions
    """

    beta0: np.ndarray
    b: np.ndarray
    lam: np.ndarray
    u: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        self.beta0 = np.asarray(self.beta0, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.lam = np.asarray(self.lam, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        m = self.beta0.shape[0]
        if self.b.ndim != 2 or self.b.shape[1] != m:
            raise ShapeMismatchError("coefficient matrix must be d x m")
        if self.lam.ndim != 2 or self.lam.shape[1] != m:
            raise ShapeMismatchError("loading matrix must be p x m")
        if self.u.ndim != 2 or self.u.shape[1] != self.lam.shape[0]:
            raise ShapeMismatchError("latent scores must be n x p")
        if self.phi.shape != (m,):
            raise ShapeMismatchError("dispersions must be an m-vector")

    @property
    def p(self) -> int:
        return self.lam.shape[0]

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.beta0.copy(), self.b.copy(), self.lam.copy(),
            self.u.copy(), self.phi.copy(),
        )


@dataclass
class FitConfig:
    """Fitting configuration shared by both methods."""

    method: str = "airwls"
    rank: int = 2
    gamma_u: float = 1.0
    gamma_lambda: float = 0.0
    tol: float = 1e-3
    max_iter: int = 500
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    shrink: float = 0.5
    max_trials: int = 30
    seed: int = 0
    parallel: bool = False
    threads: int = 1
    update_dispersion: bool = True

    def validate(self):
        if self.method not in ("airwls", "newton"):
            raise InputError(f"unknown method {self.method!r}")
        if self.rank < 0:
            raise InputError("rank must be >= 0")
        if self.tol <= 0:
            raise InputError("tol must be > 0")
        if not (0 < self.wolfe_c1 < self.wolfe_c2 < 1):
            raise InputError("need 0 < wolfe_c1 < wolfe_c2 < 1")
        if self.gamma_u < 0 or self.gamma_lambda < 0:
            raise InputError("penalties must be >= 0")
        if self.max_iter < 1:
            raise InputError("max_iter must be >= 1")

    def replace(self, **kw) -> "FitConfig":
        return replace(self, **kw)


@dataclass
class FitReport:
    """Summary of one fit."""

    method: str = ""
    objective_trace: list = field(default_factory=list)
    deviance: float = float("nan")
    iterations: int = 0
    seconds: float = 0.0
    scree: list = field(default_factory=list)
    converged: bool = False
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "objective_trace": [float(v) for v in self.objective_trace],
            "deviance": float(self.deviance),
            "iterations": self.iterations,
            "seconds": self.seconds,
            "scree": [float(v) for v in self.scree],
            "converged": self.converged,
            "diagnostics": self.diagnostics,
        }


# ------------------------------------------------------------------ #
# CSV ingestion
# ------------------------------------------------------------------ #

def _is_number(tok: str) -> bool:
    try:
        float(tok)
        return True
    except ValueError:
        return False


def load_csv_matrix(path, na_token: str = "NA"):
    """Read a numeric CSV into (matrix, mask).

    NA cells (na_token or empty string) are zero-filled with the mask bit
    cleared.  A header row is auto-detected: if the first row contains a
    non-numeric, non-NA cell it is skipped.
    """
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise ParseError(f"{path}: empty input")

    def missing(tok):
        tok = tok.strip()
        return tok == na_token or tok == ""

    first = rows[0]
    has_header = any(not (_is_number(t.strip()) or missing(t)) for t in first)
    body = rows[1:] if has_header else rows
    if not body:
        raise ParseError(f"{path}: no data rows")

    width = len(body[0])
    values = np.zeros((len(body), width))
    mask = np.ones((len(body), width), dtype=bool)
    for i, row in enumerate(body):
        if len(row) != width:
            raise ParseError(f"{path}: ragged row {i + 1 + has_header}")
        for j, tok in enumerate(row):
            tok = tok.strip()
            if missing(tok):
                mask[i, j] = False
            elif _is_number(tok):
                values[i, j] = float(tok)
            else:
                raise ParseError(f"{path}: non-numeric cell at row {i + 1 + has_header}")
    return values, mask


def save_csv_matrix(matrix, path, mask=None, na_token: str = "NA"):
    """Write a matrix as CSV with 17 significant digits (round-trip safe)."""
    matrix = np.asarray(matrix, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for i in range(matrix.shape[0]):
            row = []
            for j in range(matrix.shape[1]):
                if mask is not None and not mask[i, j]:
                    row.append(na_token)
                else:
                    row.append(f"{matrix[i, j]:.17g}")
            writer.writerow(row)


# ------------------------------------------------------------------ #
# Model persistence
# ------------------------------------------------------------------ #

def _encode_matrix(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": a.flatten(order="F").tolist()}


def _decode_matrix(obj: dict, name: str) -> np.ndarray:
    shape = tuple(obj["shape"])
    data = np.asarray(obj["data"], dtype=float)
    if data.size != int(np.prod(shape)):
        raise ShapeMismatchError(f"{name}: payload size does not match declared shape")
    return data.reshape(shape, order="F")


def save_model(params: ModelParams, meta, path):
    """Persist a model (and optional FitReport) as a JSON document."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "family": meta.diagnostics.get("family") if isinstance(meta, FitReport) else None,
        "p": params.p,
        "beta0": _encode_matrix(params.beta0.reshape(-1, 1)),
        "b": _encode_matrix(params.b),
        "lambda": _encode_matrix(params.lam),
        "u": _encode_matrix(params.u),
        "phi": _encode_matrix(params.phi.reshape(-1, 1)),
        "meta": meta.to_dict() if isinstance(meta, FitReport) else (meta or {}),
    }
    if doc["family"] is None and isinstance(meta, dict):
        doc["family"] = meta.get("family")
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path):
    """Load a model JSON; returns (ModelParams, meta dict)."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: malformed JSON ({exc})") from exc
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise VersionMismatchError(
            f"{path}: format version {doc.get('format_version')} not supported"
        )
    family_token = doc.get("family")
    if family_token is not None:
        get_family(family_token)  # raises UnsupportedFamilyError on bad token
    lam = _decode_matrix(doc["lambda"], "lambda")
    if lam.shape[0] != doc["p"]:
        raise ShapeMismatchError(
            f"{path}: lambda has {lam.shape[0]} rows but p={doc['p']} declared"
        )
    params = ModelParams(
        beta0=_decode_matrix(doc["beta0"], "beta0").ravel(),
        b=_decode_matrix(doc["b"], "b"),
        lam=lam,
        u=_decode_matrix(doc["u"], "u"),
        phi=_decode_matrix(doc["phi"], "phi").ravel(),
    )
    return params, doc.get("meta", {})


# ------------------------------------------------------------------ #
# Splits and filters
# ------------------------------------------------------------------ #

def holdout_split(data: ResponseData, fraction: float, seed: int, max_retries: int = 50):
    """Split observed cells into (train_mask, test_mask).

    Test cells are drawn uniformly without replacement; the train mask
    must keep at least one observed cell in every row and column.
    """
    if not (0 < fraction < 1):
        raise InputError("holdout fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    obs = np.argwhere(data.mask)
    n_test = int(round(fraction * len(obs)))
    if n_test == 0:
        raise SplitInfeasibleError("holdout fraction selects zero cells")
    for _ in range(max_retries):
        picks = rng.choice(len(obs), size=n_test, replace=False)
        test_mask = np.zeros_like(data.mask)
        test_mask[obs[picks, 0], obs[picks, 1]] = True
        train_mask = data.mask & ~test_mask
        if train_mask.any(axis=1).all() and train_mask.any(axis=0).all():
            return train_mask, test_mask
    raise SplitInfeasibleError(
        "could not find a split keeping every row and column observed"
    )


def filter_sparse(data: ResponseData, threshold: float):
    """Drop rows/columns whose fraction of positive observed responses is
    below threshold.  Returns (filtered data, kept_rows, kept_cols)."""
    pos = (data.y > 0) & data.mask
    obs_rows = data.mask.sum(axis=1)
    obs_cols = data.mask.sum(axis=0)
    keep_rows = np.where(pos.sum(axis=1) / np.maximum(obs_rows, 1) >= threshold)[0]
    keep_cols = np.where(pos.sum(axis=0) / np.maximum(obs_cols, 1) >= threshold)[0]
    if keep_rows.size == 0 or keep_cols.size == 0:
        raise InputError("filter threshold removes all rows or all columns")
    sub = ResponseData(
        data.y[np.ix_(keep_rows, keep_cols)],
        data.mask[np.ix_(keep_rows, keep_cols)],
        data.x[keep_rows] if data.d else None,
        data.family,
    )
    return sub, keep_rows, keep_cols
