"""One-to-one radio identity verification.

A device is enrolled as a Gaussian reference model over its selected
features (mean + ridge-regularized full covariance). A probe claiming that
identity is scored by squared Mahalanobis distance and accepted when the
score is at or below the fingerprint's threshold. Squared distances are
used throughout; thresholds are in d^2 units.

FAR/FRR conventions (distance scores, accept iff d^2 <= t): FAR(t) is
non-decreasing and FRR(t) non-increasing in t; at extreme thresholds the
operating points are (FAR=0, FRR=1) and (FAR=1, FRR=0).

The store format is JSON, one document per device, with floats printed at
full round-trip precision so load(save(fp)) is exact.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import (
    CatalogMismatchError,
    EnrollmentError,
    ParameterError,
    UnsupportedFormatError,
    ValidationError,
)
from .features import FeatureSelection, FeatureVector

__all__ = [
    "DeviceFingerprint",
    "VerificationDecision",
    "EvaluationReport",
    "enroll",
    "verify",
    "mahalanobis_squared",
    "score_vectors",
    "calibrate_threshold",
    "evaluate",
    "save_fingerprint_store",
    "load_fingerprint_store",
]

FINGERPRINT_STORE_FORMAT = "fingerprint-store-v1"

_FAR_FRR_ANCHORS = (0.001, 0.01, 0.05, 0.1)


@dataclass(frozen=True, eq=False)
class DeviceFingerprint:
    """Enrolled per-device reference model."""

    device_id: str
    catalog_version: str
    selection: FeatureSelection
    mean: np.ndarray
    covariance: np.ndarray
    ridge_lambda: float
    threshold: float
    n_enrolled: int

    def __post_init__(self) -> None:
        mean = np.array(self.mean, dtype=np.float64, copy=True)
        cov = np.array(self.covariance, dtype=np.float64, copy=True)
        d = len(self.selection.kept_indices)
        if mean.shape != (d,) or cov.shape != (d, d):
            raise ParameterError("mean/covariance dimensions must match the selection size")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12):
            raise ParameterError("covariance must be symmetric")
        if self.ridge_lambda < 0:
            raise ParameterError("ridge_lambda must be >= 0")
        if not self.threshold > 0:
            raise ParameterError("threshold must be > 0")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return int(self.mean.size)

    def with_threshold(self, threshold: float) -> "DeviceFingerprint":
        return DeviceFingerprint(
            self.device_id, self.catalog_version, self.selection,
            self.mean, self.covariance, self.ridge_lambda, threshold, self.n_enrolled,
        )


@dataclass(frozen=True)
class VerificationDecision:
    claimed_id: str
    squared_distance: float
    accepted: bool
    threshold_used: float


def enroll(
    device_id: str,
    vectors: Sequence[FeatureVector],
    selection: FeatureSelection,
    ridge_lambda: float = 1e-3,
) -> DeviceFingerprint:
    """Build a device fingerprint from labeled enrollment vectors.

    Requires n >= max(8, dim + 1) vectors sharing one catalog version.
    Covariance is the sample covariance (divisor n-1) plus
    ridge_lambda * diag(sample variances floored at 1e-12); the result must
    be positive definite or enrollment fails. The initial threshold is the
    chi-square-like default 3 * dim and is meant to be recalibrated.
    """
    if ridge_lambda < 0:
        raise ParameterError("ridge_lambda must be >= 0")
    d = len(selection.kept_indices)
    n_min = max(8, d + 1)
    if len(vectors) < n_min:
        raise EnrollmentError(
            f"need at least {n_min} vectors for dimension {d}, got {len(vectors)}"
        )
    version = vectors[0].catalog_version
    if any(v.catalog_version != version for v in vectors):
        raise CatalogMismatchError("enrollment vectors span multiple catalog versions")

    X = np.vstack([selection.apply(v) for v in vectors])
    mean = X.mean(axis=0)
    cov = np.atleast_2d(np.cov(X, rowvar=False, ddof=1))
    diag = np.maximum(X.var(axis=0, ddof=1), 1e-12)
    cov = cov + ridge_lambda * np.diag(diag)
    cov = (cov + cov.T) / 2.0

    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise EnrollmentError(
            f"covariance for '{device_id}' is not positive definite; "
            f"increase ridge_lambda (got {ridge_lambda})"
        ) from None

    return DeviceFingerprint(
        device_id=device_id,
        catalog_version=version,
        selection=selection,
        mean=mean,
        covariance=cov,
        ridge_lambda=float(ridge_lambda),
        threshold=3.0 * d,
        n_enrolled=len(vectors),
    )


def mahalanobis_squared(x: np.ndarray, fingerprint: DeviceFingerprint) -> float:
    """(x - mu)^T Sigma^(-1) (x - mu) via Cholesky solve (no explicit inverse)."""
    delta = np.asarray(x, dtype=np.float64) - fingerprint.mean
    factor = cho_factor(fingerprint.covariance, lower=True)
    return float(delta @ cho_solve(factor, delta))


def verify(vector: FeatureVector, fingerprint: DeviceFingerprint) -> VerificationDecision:
    """Score a probe against the claimed identity's reference model."""
    if vector.catalog_version != fingerprint.catalog_version:
        raise CatalogMismatchError(
            f"probe catalog '{vector.catalog_version}' does not match "
            f"fingerprint catalog '{fingerprint.catalog_version}'"
        )
    d2 = mahalanobis_squared(fingerprint.selection.apply(vector), fingerprint)
    return VerificationDecision(
        claimed_id=fingerprint.device_id,
        squared_distance=d2,
        accepted=d2 <= fingerprint.threshold,
        threshold_used=fingerprint.threshold,
    )


def score_vectors(vectors: Sequence[FeatureVector], fingerprint: DeviceFingerprint) -> np.ndarray:
    """Squared distances of many probes against one fingerprint."""
    return np.array([verify(v, fingerprint).squared_distance for v in vectors])


def _far_frr_curves(genuine: np.ndarray, impostor: np.ndarray, thresholds: np.ndarray):
    gen_sorted = np.sort(genuine)
    imp_sorted = np.sort(impostor)
    far = np.searchsorted(imp_sorted, thresholds, side="right") / imp_sorted.size
    frr = (gen_sorted.size - np.searchsorted(gen_sorted, thresholds, side="right")) / gen_sorted.size
    return far, frr


def _score_union(genuine, impostor) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    gen = np.asarray(genuine, dtype=np.float64)
    imp = np.asarray(impostor, dtype=np.float64)
    if gen.size == 0 or imp.size == 0:
        raise ParameterError("genuine and impostor score sets must be non-empty")
    union = np.unique(np.concatenate([gen, imp]))
    return gen, imp, union


def calibrate_threshold(genuine_d2, impostor_d2, policy: str = "eer", max_far: float | None = None) -> float:
    """Pick an acceptance threshold from genuine/impostor score sets.

    policy="eer": the midpoint of the interval where FAR and FRR cross over
    the sorted union of scores. policy="target_far": the largest threshold
    whose FAR stays at or below max_far (a value just below the smallest
    score if even that is too permissive).
    """
    gen, imp, union = _score_union(genuine_d2, impostor_d2)
    far, frr = _far_frr_curves(gen, imp, union)

    if policy == "eer":
        diff = far - frr  # monotone non-decreasing; ends at +1, so it always crosses
        zeros = np.flatnonzero(diff == 0.0)
        if zeros.size:
            return float((union[zeros[0]] + union[zeros[-1]]) / 2.0)
        first_pos = int(np.argmax(diff > 0.0))
        if first_pos == 0:
            return float(union[0])
        return float((union[first_pos - 1] + union[first_pos]) / 2.0)

    if policy == "target_far":
        if max_far is None or not 0.0 <= max_far <= 1.0:
            raise ParameterError("target_far policy needs max_far in [0, 1]")
        ok = np.flatnonzero(far <= max_far)
        if ok.size == 0:
            return float(union[0] - 1.0)
        return float(union[ok[-1]])

    raise ParameterError(f"unknown policy '{policy}'")


@dataclass(frozen=True, eq=False)
class EvaluationReport:
    """ROC over the sorted score union plus the equal-error operating point."""

    thresholds: np.ndarray
    far: np.ndarray
    frr: np.ndarray
    eer: float
    eer_threshold: float
    far_at: dict[float, float]
    frr_at: dict[float, float]

    @property
    def roc(self) -> np.ndarray:
        """Rows of (FAR, FRR, threshold)."""
        return np.column_stack([self.far, self.frr, self.thresholds])


def evaluate(genuine_d2, impostor_d2) -> EvaluationReport:
    """FAR/FRR curves, EER, and anchored error rates for two score sets.

    EER is the average of FAR and FRR at the first threshold (in ascending
    score order) minimizing |FAR - FRR|. far_at maps an FRR anchor to the
    FAR at the smallest threshold reaching that FRR; frr_at maps an FAR
    anchor to the FRR at the largest threshold still within that FAR.
    """
    gen, imp, union = _score_union(genuine_d2, impostor_d2)
    far, frr = _far_frr_curves(gen, imp, union)

    idx = int(np.argmin(np.abs(far - frr)))
    eer = float((far[idx] + frr[idx]) / 2.0)

    far_at: dict[float, float] = {}
    frr_at: dict[float, float] = {}
    for anchor in _FAR_FRR_ANCHORS:
        i = int(np.argmax(frr <= anchor))  # frr is non-increasing; last value is 0
        far_at[anchor] = float(far[i])
        ok = np.flatnonzero(far <= anchor)
        frr_at[anchor] = float(frr[ok[-1]]) if ok.size else 1.0

    return EvaluationReport(
        thresholds=union,
        far=far,
        frr=frr,
        eer=eer,
        eer_threshold=float(union[idx]),
        far_at=far_at,
        frr_at=frr_at,
    )


def _fingerprint_to_doc(fp: DeviceFingerprint) -> dict:
    return {
        "device_id": fp.device_id,
        "catalog_version": fp.catalog_version,
        "kept_indices": list(fp.selection.kept_indices),
        "selection_scores": fp.selection.scores.tolist(),
        "mean": fp.mean.tolist(),
        "covariance": fp.covariance.tolist(),  # row-major nested lists
        "ridge_lambda": fp.ridge_lambda,
        "threshold": fp.threshold,
        "n_enrolled": fp.n_enrolled,
    }


def _fingerprint_from_doc(doc: dict) -> DeviceFingerprint:
    required = {
        "device_id", "catalog_version", "kept_indices", "selection_scores",
        "mean", "covariance", "ridge_lambda", "threshold", "n_enrolled",
    }
    missing = required - doc.keys()
    if missing:
        raise ValidationError(f"fingerprint document missing field '{sorted(missing)[0]}'")
    selection = FeatureSelection(tuple(doc["kept_indices"]), np.asarray(doc["selection_scores"]))
    return DeviceFingerprint(
        device_id=doc["device_id"],
        catalog_version=doc["catalog_version"],
        selection=selection,
        mean=np.asarray(doc["mean"], dtype=np.float64),
        covariance=np.asarray(doc["covariance"], dtype=np.float64),
        ridge_lambda=float(doc["ridge_lambda"]),
        threshold=float(doc["threshold"]),
        n_enrolled=int(doc["n_enrolled"]),
    )


def save_fingerprint_store(
    fingerprints: Sequence[DeviceFingerprint],
    path,
    catalog_names: Sequence[str] | None = None,
) -> None:
    """Write fingerprints as a versioned JSON store (atomic, full precision).

    catalog_names, when given, records the full ordered feature catalog the
    selections index into, making the store self-describing.
    """
    ids = [fp.device_id for fp in fingerprints]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate device_id in fingerprint store")
    doc = {
        "format": FINGERPRINT_STORE_FORMAT,
        "catalog_names": list(catalog_names) if catalog_names is not None else None,
        "fingerprints": [_fingerprint_to_doc(fp) for fp in fingerprints],
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def load_fingerprint_store(path) -> dict[str, DeviceFingerprint]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != FINGERPRINT_STORE_FORMAT:
        raise UnsupportedFormatError(
            f"unsupported fingerprint store format {doc.get('format')!r}"
        )
    store: dict[str, DeviceFingerprint] = {}
    for fp_doc in doc["fingerprints"]:
        fp = _fingerprint_from_doc(fp_doc)
        if fp.device_id in store:
            raise ValidationError(f"duplicate device_id '{fp.device_id}' in store")
        store[fp.device_id] = fp
    return store


def genuine_impostor_scores(
    probes: Sequence[FeatureVector],
    labels: Sequence[str],
    store: Mapping[str, DeviceFingerprint],
) -> tuple[np.ndarray, np.ndarray]:
    """Score every probe against every enrolled device.

    A probe scored against the fingerprint of its own label contributes a
    genuine score; against any other fingerprint an impostor score.
    """
    if len(probes) != len(labels):
        raise ParameterError("probes and labels must have the same length")
    genuine: list[float] = []
    impostor: list[float] = []
    for vec, label in zip(probes, labels):
        for device_id, fp in store.items():
            d2 = verify(vec, fp).squared_distance
            (genuine if device_id == label else impostor).append(d2)
    return np.asarray(genuine), np.asarray(impostor)
