"""Plain-text record files for fits, chains, weights and Lasso coefficients.

A record is a sequence of ``key = value`` lines preceded by a ``# kind``
header. Atom indices are written 1-based (the internal arrays are
0-based) and floats use 17 significant digits, so values round-trip
exactly.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .aggregate import CandidateSet, SimplexWeights
from .estimator import Model, ProjectionFit
from .lasso import LassoFit
from .search import SATrace


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def fmt_model(model: Model) -> str:
    return " ".join(str(j + 1) for j in model.indices)


def parse_model(text: str) -> Model:
    return Model.of(int(tok) - 1 for tok in text.split())


def _render(kind: str, items: list) -> str:
    return "\n".join([f"# {kind}"] + [f"{k} = {v}".rstrip() for k, v in items]) + "\n"


def fit_record(fit: ProjectionFit) -> str:
    return _render("projection_fit", [
        ("model", fmt_model(fit.model)),
        ("coefficients", " ".join(fmt_float(c) for c in fit.coefficients)),
        ("objective", fmt_float(fit.objective)),
        ("penalty", fmt_float(fit.penalty)),
        ("frobenius_sq", fmt_float(fit.frobenius_sq)),
        ("empirical_risk", fmt_float(fit.empirical_risk)),
    ])


def trace_record(trace: SATrace) -> str:
    items = [
        ("best_model", fmt_model(trace.best_model)),
        ("best_objective", fmt_float(trace.best_objective)),
        ("final_model", fmt_model(trace.final_model)),
        ("initial_model", fmt_model(trace.initial_model)),
        ("acceptance_count", str(trace.acceptance_count)),
        ("rejected_cap", str(trace.rejected_cap)),
        ("rejected_rank", str(trace.rejected_rank)),
        ("iterations", str(trace.objective_history_summary[2])),
    ]
    for model, obj in zip(trace.visited_tail, trace.tail_objectives):
        items.append(("tail", f"{fmt_float(obj)} : {fmt_model(model)}"))
    return _render("sa_trace", items)


def weights_record(cand: CandidateSet, weights: SimplexWeights) -> str:
    items = [
        ("objective", fmt_float(weights.objective_value)),
        ("gap", fmt_float(weights.gap)),
        ("converged", str(weights.converged).lower()),
    ]
    for fit, w in zip(cand.fits, weights.weights):
        items.append(("weight", f"{fmt_float(w)} : {fmt_model(fit.model)}"))
    return _render("aggregation_weights", items)


def lasso_record(fit: LassoFit) -> str:
    items = [
        ("lambda", fmt_float(fit.lam)),
        ("iterations", str(fit.iterations)),
        ("converged", str(fit.converged).lower()),
        ("support_size", str(len(fit.support))),
    ]
    for j in fit.support:
        items.append(("coef", f"{j + 1} {fmt_float(fit.coefficients[j])}"))
    return _render("lasso_fit", items)


def parse_record(text: str) -> tuple[str, list]:
    """Return ``(kind, [(key, value), ...])`` in file order."""
    kind, items = "", []
    for line in text.splitlines():
        if line.startswith("# ") and not kind:
            kind = line[2:].strip()
            continue
        if not line.strip() or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        items.append((key.strip(), value.strip()))
    return kind, items


def write_vector(path, v) -> None:
    Path(path).write_text("\n".join(fmt_float(x) for x in np.asarray(v, dtype=float)) + "\n")


def read_vector(path) -> np.ndarray:
    return np.array([float(tok) for tok in Path(path).read_text().split()])
