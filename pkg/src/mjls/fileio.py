"""JSON model/gain-bank files and CSV trace export.

Model files carry the two subsystems' mode matrices, the squared-norm
shell thresholds, the per-region rate matrices, and the per-region
emission matrices.  Gain files carry the scheme, the flat gain list and,
when available, the certificate's Lyapunov matrices and closed-loop
margins.  All JSON is written canonically: sorted keys, shortest
round-trip float formatting, newline-terminated, atomic replace.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .errors import MjlsError
from .model import (
    InterdependentModel,
    JumpLinearSystem,
    ModeDynamics,
    ObservationModel,
    RateFamily,
    RegionPartition,
)
from .synthesis import Certificate, ControllerBank, Scheme

__all__ = [
    "ParseError",
    "load_model",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_bank",
    "bank_to_dict",
    "bank_from_dict",
    "save_bank",
    "write_trace_csv",
    "save_report",
    "canonical_json",
    "atomic_write_text",
]


class ParseError(MjlsError):
    """Input file rejected; the message carries a path-qualified diagnostic."""


def _matrix(node, where: str) -> np.ndarray:
    try:
        m = np.array(node, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: not a rectangular number matrix ({exc})") from None
    if m.ndim != 2 or m.size == 0:
        raise ParseError(f"{where}: expected a nonempty 2-D matrix, got shape {m.shape}")
    return m


def _require(node, key: str, where: str):
    if not isinstance(node, dict) or key not in node:
        raise ParseError(f"{where}: missing required key {key!r}")
    return node[key]


def _system_from_dict(node, where: str) -> JumpLinearSystem:
    modes_node = _require(node, "modes", where)
    if not isinstance(modes_node, list) or not modes_node:
        raise ParseError(f"{where}.modes: expected a nonempty list")
    modes = []
    for idx, mode in enumerate(modes_node, start=1):
        a = _matrix(_require(mode, "A", f"{where}.modes[{idx}]"), f"{where}.modes[{idx}].A")
        b = _matrix(_require(mode, "B", f"{where}.modes[{idx}]"), f"{where}.modes[{idx}].B")
        d = _matrix(_require(mode, "D", f"{where}.modes[{idx}]"), f"{where}.modes[{idx}].D")
        modes.append(ModeDynamics(a, b, d))
    first = modes[0]
    return JumpLinearSystem(
        state_dim=first.a.shape[0],
        input_dim=first.b.shape[1],
        disturbance_dim=first.d.shape[1],
        modes=tuple(modes),
    )


def _partition_from_dict(node, where: str) -> RegionPartition:
    thresholds = _require(node, "thresholds", where)
    if not isinstance(thresholds, list):
        raise ParseError(f"{where}.thresholds: expected a list of numbers")
    try:
        values = tuple(float(t) for t in thresholds)
    except (TypeError, ValueError):
        raise ParseError(f"{where}.thresholds: entries must be numbers") from None
    return RegionPartition(values)


def _matrix_list(node, where: str) -> tuple[np.ndarray, ...]:
    if not isinstance(node, list) or not node:
        raise ParseError(f"{where}: expected a nonempty list of matrices")
    return tuple(_matrix(m, f"{where}[{i}]") for i, m in enumerate(node, start=1))


def model_from_dict(doc) -> InterdependentModel:
    if not isinstance(doc, dict):
        raise ParseError("top level: expected a JSON object")
    return InterdependentModel(
        sys1=_system_from_dict(_require(doc, "system1", "top level"), "system1"),
        sys2=_system_from_dict(_require(doc, "system2", "top level"), "system2"),
        part1=_partition_from_dict(_require(doc, "partition1", "top level"), "partition1"),
        part2=_partition_from_dict(_require(doc, "partition2", "top level"), "partition2"),
        rates1=RateFamily(_matrix_list(_require(doc, "rates1", "top level"), "rates1")),
        rates2=RateFamily(_matrix_list(_require(doc, "rates2", "top level"), "rates2")),
        obs1=ObservationModel(_matrix_list(_require(doc, "obs1", "top level"), "obs1")),
        obs2=ObservationModel(_matrix_list(_require(doc, "obs2", "top level"), "obs2")),
    )


def model_to_dict(model: InterdependentModel, notes: str | None = None) -> dict:
    def system(sys: JumpLinearSystem) -> dict:
        return {
            "modes": [
                {"A": m.a.tolist(), "B": m.b.tolist(), "D": m.d.tolist()} for m in sys.modes
            ]
        }

    doc = {
        "system1": system(model.sys1),
        "system2": system(model.sys2),
        "partition1": {"thresholds": list(model.part1.thresholds)},
        "partition2": {"thresholds": list(model.part2.thresholds)},
        "rates1": [g.tolist() for g in model.rates1.matrices],
        "rates2": [g.tolist() for g in model.rates2.matrices],
        "obs1": [a.tolist() for a in model.obs1.alphas],
        "obs2": [a.tolist() for a in model.obs2.alphas],
    }
    if notes is not None:
        doc["notes"] = notes
    return doc


def load_model(path) -> InterdependentModel:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})") from None
    try:
        return model_from_dict(doc)
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from None


def save_model(path, model: InterdependentModel, notes: str | None = None) -> None:
    atomic_write_text(path, canonical_json(model_to_dict(model, notes)))


def _certificate_key_order(scheme: Scheme, gains: dict):
    """Canonical (system, mode, cell) iteration for certificate margins."""
    if scheme is Scheme.DISTRIBUTED:
        systems = (1, 2)
    else:
        systems = (0,)
    order = []
    for k in systems:
        modes = sorted({obs for (sys_id, obs, _c) in gains if sys_id == k})
        cells = sorted({c for (sys_id, _o, c) in gains if sys_id == k})
        for i in modes:
            for cell in cells:
                order.append((k, i, cell))
    return order


def bank_to_dict(bank: ControllerBank) -> dict:
    entries = []
    for (system, obs, cell), g in sorted(
        bank.gains.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2])
    ):
        entries.append(
            {
                "system": system,
                "observation": obs,
                "region1": cell[0],
                "region2": cell[1],
                "G": np.asarray(g).tolist(),
            }
        )
    doc = {"scheme": bank.scheme.value, "gains": entries}
    if bank.certificates:
        p_list = []
        margins = []
        deltas = []
        certified = []
        for k in sorted(bank.certificates):
            cert = bank.certificates[k]
            p_list.extend(p.tolist() for p in cert.p_matrices)
            margins.extend(cert.psi_max[key] for key in sorted(cert.psi_max))
            deltas.append(cert.delta)
            certified.append(cert.certified)
        doc["certificate"] = {
            "P": p_list,
            "margins": margins,
            "delta": min(deltas),
            "certified": all(certified),
        }
    return doc


def bank_from_dict(doc) -> ControllerBank:
    if not isinstance(doc, dict):
        raise ParseError("top level: expected a JSON object")
    scheme_raw = _require(doc, "scheme", "top level")
    try:
        scheme = Scheme(scheme_raw)
    except ValueError:
        raise ParseError(
            f"scheme: {scheme_raw!r} is not one of "
            f"{sorted(s.value for s in Scheme)}"
        ) from None
    entries = _require(doc, "gains", "top level")
    if not isinstance(entries, list) or not entries:
        raise ParseError("gains: expected a nonempty list")
    gains = {}
    for idx, entry in enumerate(entries, start=1):
        where = f"gains[{idx}]"
        system = int(_require(entry, "system", where))
        obs = int(_require(entry, "observation", where))
        m1 = int(_require(entry, "region1", where))
        m2 = int(_require(entry, "region2", where))
        g = _matrix(_require(entry, "G", where), f"{where}.G")
        key = (system, obs, (m1, m2))
        if key in gains:
            raise ParseError(f"{where}: duplicate gain for {key}")
        gains[key] = g

    certificates = {}
    cert_node = doc.get("certificate")
    if cert_node is not None:
        p_all = [
            _matrix(p, f"certificate.P[{i}]")
            for i, p in enumerate(_require(cert_node, "P", "certificate"), start=1)
        ]
        margins = list(_require(cert_node, "margins", "certificate"))
        delta = float(cert_node.get("delta", 1e-8))
        key_order = _certificate_key_order(scheme, gains)
        if len(margins) != len(key_order):
            raise ParseError(
                f"certificate.margins: expected {len(key_order)} values, got {len(margins)}"
            )
        systems = (1, 2) if scheme is Scheme.DISTRIBUTED else (0,)
        p_cursor = 0
        margin_map = dict(zip(key_order, (float(v) for v in margins)))
        for k in systems:
            modes = sorted({obs for (sys_id, obs, _c) in gains if sys_id == k})
            p_slice = p_all[p_cursor : p_cursor + len(modes)]
            p_cursor += len(modes)
            if len(p_slice) != len(modes):
                raise ParseError("certificate.P: wrong number of matrices")
            psi_max = {
                (i, cell): margin_map[(k, i, cell)] for (kk, i, cell) in key_order if kk == k
            }
            certificates[k] = Certificate(
                p_matrices=tuple(p_slice),
                psi={},
                psi_max=psi_max,
                delta=delta,
                certified=bool(cert_node.get("certified", False)),
                s_values=tuple(1.0 for _ in modes),
            )
        if p_cursor != len(p_all):
            raise ParseError("certificate.P: wrong number of matrices")
    return ControllerBank(scheme=scheme, gains=gains, certificates=certificates)


def load_bank(path) -> ControllerBank:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})") from None
    try:
        return bank_from_dict(doc)
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from None


def save_bank(path, bank: ControllerBank) -> None:
    atomic_write_text(path, canonical_json(bank_to_dict(bank)))


def trace_header(n1x: int, n2x: int, n1u: int, n2u: int) -> str:
    cols = ["t"]
    cols += [f"x1_{i + 1}" for i in range(n1x)]
    cols += [f"x2_{i + 1}" for i in range(n2x)]
    cols += ["mode1", "mode2", "obs1", "obs2", "region1", "region2"]
    cols += ["u1"] if n1u == 1 else [f"u1_{i + 1}" for i in range(n1u)]
    cols += ["u2"] if n2u == 1 else [f"u2_{i + 1}" for i in range(n2u)]
    return ",".join(cols)


def write_trace_csv(path, trace) -> None:
    """Trace rows with shortest round-trip decimal formatting."""
    lines = [trace_header(trace.x1.shape[1], trace.x2.shape[1], trace.u1.shape[1], trace.u2.shape[1])]
    for n in range(len(trace.t)):
        cells = [repr(float(trace.t[n]))]
        cells += [repr(float(v)) for v in trace.x1[n]]
        cells += [repr(float(v)) for v in trace.x2[n]]
        cells += [
            str(int(trace.mode1[n])),
            str(int(trace.mode2[n])),
            str(int(trace.obs1[n])),
            str(int(trace.obs2[n])),
            str(int(trace.region1[n])),
            str(int(trace.region2[n])),
        ]
        cells += [repr(float(v)) for v in trace.u1[n]]
        cells += [repr(float(v)) for v in trace.u2[n]]
        lines.append(",".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")


def save_report(path, report) -> None:
    doc = {
        "runs": report.runs,
        "mean": report.mean,
        "stderr": report.stderr,
        "functional_per_run": list(report.functional_per_run),
        "terminal_norms": list(report.terminal_norms),
        "saturation": report.saturation,
    }
    atomic_write_text(path, canonical_json(doc))


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)
