"""Model files (JSON) and datasets (CSV with a header row)."""

import csv
import json
import math

import numpy as np

from .errors import ScaledPHError, UnsupportedError, ValidationError
from .multivar import CorrelatedGammaModel, SharedModel
from .phase import Intensity, PhaseParams
from .scaling import MittagLeffler, scaling_from_dict
from .siph import Observations, SiphModel, mml_model


class ModelFileError(ValidationError):
    """A model document that does not describe a valid model; the message names the field."""


class DatasetError(ValidationError):
    """A malformed dataset; the message names the line."""


KINDS = ("siph", "mml", "shared", "correlated")


# ---------------------------------------------------------------------------
# Models

def _field(doc, key, path):
    if not isinstance(doc, dict) or key not in doc:
        raise ModelFileError(f"{path}{key}: missing")
    return doc[key]


def _build(path, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ModelFileError:
        raise
    except (ScaledPHError, TypeError, ValueError, KeyError) as exc:
        raise ModelFileError(f"{path}: {exc}") from None


def _phase(doc_pi, doc_T, path):
    return _build(path, PhaseParams, np.asarray(doc_pi, dtype=float),
                  np.asarray(doc_T, dtype=float))


def _intensity(doc, path):
    if doc is None:
        return Intensity()
    if not isinstance(doc, dict):
        raise ModelFileError(f"{path}: expected an object with family and params")
    return _build(path, Intensity, _field(doc, "family", path + "."),
                  **doc.get("params", {}))


def _scaling(doc, path):
    if not isinstance(doc, dict):
        raise ModelFileError(f"{path}: expected an object with family and params")
    _field(doc, "family", path + ".")
    return _build(path, scaling_from_dict, doc)


def _list(doc, key, n=None):
    val = _field(doc, key, "")
    if not isinstance(val, list) or (n is not None and len(val) != n):
        want = f"a list of length {n}" if n is not None else "a list"
        raise ModelFileError(f"{key}: expected {want}")
    return val


def model_from_dict(doc):
    kind = _field(doc, "kind", "")
    if kind not in KINDS:
        raise ModelFileError(f"kind: must be one of {', '.join(KINDS)}, got {kind!r}")
    if kind == "siph":
        phase = _phase(_field(doc, "pi", ""), _field(doc, "T", ""), "pi/T")
        lam = _intensity(doc.get("intensity"), "intensity")
        sc = _scaling(_field(doc, "scaling", ""), "scaling")
        return _build("beta", SiphModel, phase, lam, sc, np.asarray(doc.get("beta", []), float))
    if kind == "mml":
        phase = _phase(_field(doc, "pi", ""), _field(doc, "T", ""), "pi/T")
        return _build("alpha", mml_model, phase, _field(doc, "alpha", ""))
    pis = _list(doc, "pi")
    Ts = _list(doc, "T", len(pis))
    lams = doc.get("intensity") or [None] * len(pis)
    if not isinstance(lams, list) or len(lams) != len(pis):
        raise ModelFileError(f"intensity: expected a list of length {len(pis)}")
    marg = [(_phase(pis[i], Ts[i], f"pi[{i}]/T[{i}]"), _intensity(lams[i], f"intensity[{i}]"))
            for i in range(len(pis))]
    if kind == "shared":
        sc = _scaling(_field(doc, "scaling", ""), "scaling")
        return _build("shared", SharedModel, marg, sc)
    if len(marg) != 2:
        raise ModelFileError("pi: correlated models are bivariate")
    kappa = _list(doc, "kappa", 3)
    eta = doc.get("eta") or [None, None]
    if not isinstance(eta, list) or len(eta) != 2:
        raise ModelFileError("eta: expected a list of length 2")
    return _build("kappa", CorrelatedGammaModel, marg[0], marg[1], *kappa, *eta)


def model_to_dict(model):
    if isinstance(model, SiphModel):
        sc = model.scaling
        if (isinstance(sc, MittagLeffler) and model.intensity.family == "weibull"
                and model.intensity.params["eta"] == sc.alpha and model.q == 0):
            return {"kind": "mml", **model.phase.to_dict(), "alpha": sc.alpha}
        out = {"kind": "siph", **model.phase.to_dict(), "intensity": model.intensity.to_dict(),
               "scaling": sc.to_dict()}
        if model.q:
            out["beta"] = model.beta.tolist()
        return out
    if isinstance(model, SharedModel):
        return {"kind": "shared", "pi": [p.pi.tolist() for p, _ in model.marginals],
                "T": [p.T.tolist() for p, _ in model.marginals],
                "intensity": [lam.to_dict() for _, lam in model.marginals],
                "scaling": model.scaling.to_dict()}
    if isinstance(model, CorrelatedGammaModel):
        ms = (model.marginal1, model.marginal2)
        return {"kind": "correlated", "pi": [p.pi.tolist() for p, _ in ms],
                "T": [p.T.tolist() for p, _ in ms],
                "intensity": [lam.to_dict() for _, lam in ms],
                "kappa": [model.kappa0, model.kappa1, model.kappa2],
                "eta": [model.eta1, model.eta2]}
    raise UnsupportedError(f"cannot serialise {type(model).__name__}")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFileError(f"not valid JSON: {exc}") from None
    return model_from_dict(doc)


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")


def model_kind(model):
    return model_to_dict(model)["kind"]


# ---------------------------------------------------------------------------
# Datasets

def read_dataset(path):
    """Parse a CSV dataset into a dict of float columns keyed by header name.

    Accepted columns are ``y`` or ``y1..yd``, ``x1..xq`` and ``censor``.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetError("line 1: empty file")
    header = [h.strip() for h in rows[0]]
    allowed = {"y", "censor"}
    for h in header:
        if not (h in allowed or (h[:1] in "yx" and h[1:].isdigit() and int(h[1:]) >= 1)):
            raise DatasetError(f"line 1: unknown column {h!r}")
    if len(set(header)) != len(header):
        raise DatasetError("line 1: duplicate column names")
    cols = {h: [] for h in header}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DatasetError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        for h, cell in zip(header, row):
            try:
                v = float(cell)
            except ValueError:
                raise DatasetError(f"line {lineno}: could not parse {cell.strip()!r} "
                                   f"in column {h}") from None
            if not math.isfinite(v):
                raise DatasetError(f"line {lineno}: non-finite value in column {h}")
            if h.startswith("y") and v <= 0:
                raise DatasetError(f"line {lineno}: {h} must be positive")
            if h == "censor" and v not in (0.0, 1.0):
                raise DatasetError(f"line {lineno}: censor must be 0 or 1")
            cols[h].append(v)
    if not cols[header[0]]:
        raise DatasetError("line 2: no data rows")
    return {h: np.array(v) for h, v in cols.items()}


def _numbered(cols, prefix):
    names = sorted((h for h in cols if h.startswith(prefix) and h[1:].isdigit()),
                   key=lambda h: int(h[1:]))
    if [int(h[1:]) for h in names] != list(range(1, len(names) + 1)):
        raise DatasetError(f"line 1: {prefix} columns must be numbered 1, 2, ...")
    return names


def univariate_data(cols):
    if "y" in cols:
        y = cols["y"]
    elif list(_numbered(cols, "y")) == ["y1"]:
        y = cols["y1"]
    else:
        raise DatasetError("line 1: univariate data need a single y column")
    xs = _numbered(cols, "x")
    X = np.column_stack([cols[h] for h in xs]) if xs else None
    return Observations(y, X, cols.get("censor"))


def multivariate_data(cols):
    if "censor" in cols:
        raise DatasetError("line 1: censoring is only supported for univariate data")
    ys = _numbered(cols, "y")
    if len(ys) < 2:
        raise DatasetError("line 1: multivariate data need columns y1, y2, ...")
    return np.column_stack([cols[h] for h in ys])


def write_table(fh, header, rows, digits=7):
    fh.write(",".join(header) + "\n")
    for row in rows:
        fh.write(",".join(f"{v:.{digits}g}" for v in row) + "\n")
