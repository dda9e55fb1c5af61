"""Versioned model files: a zip holding ``meta.json`` and ``.npy`` tensors.

Entries carry a fixed timestamp so identical models give identical bytes.
"""

import io
import json
import zipfile

import numpy as np

from .._io import atomic_write_bytes
from ..errors import ModelFormatError
from .dnn import DnnClassifier, DnnConfig, build_encoder, build_head
from .gp import GpConfig, GpModel

FORMAT = "driftbench-model"
VERSION = 1
_FIXED_TIME = (1980, 1, 1, 0, 0, 0)


def _write_zip(meta, arrays):
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        info = zipfile.ZipInfo("meta.json", date_time=_FIXED_TIME)
        zf.writestr(info, json.dumps(meta, indent=2, sort_keys=True), zipfile.ZIP_DEFLATED)
        for name in sorted(arrays):
            arr_buf = io.BytesIO()
            np.save(arr_buf, np.ascontiguousarray(arrays[name]), allow_pickle=False)
            info = zipfile.ZipInfo(f"{name}.npy", date_time=_FIXED_TIME)
            zf.writestr(info, arr_buf.getvalue(), zipfile.ZIP_DEFLATED)
    return buf.getvalue()


def _dnn_payload(clf):
    arrays = {}
    for i, layer in enumerate(clf.layers):
        for name, value in layer.params.items():
            arrays[f"layer{i}.{name}"] = value
    bn = clf.batchnorm
    arrays["bn.running_mean"] = bn.running_mean
    arrays["bn.running_var"] = bn.running_var
    meta = {
        "kind": "dnn",
        "config": clf.cfg.to_dict(),
        "class_labels": list(clf.class_labels),
        "ap_universe": list(clf.ap_universe),
        "n_aps": clf.cfg.n_aps,
        "layers": [layer.kind for layer in clf.layers],
    }
    return meta, arrays


def _gp_payload(model):
    meta = {
        "kind": "gp",
        "config": model.cfg.to_dict(),
        "jitter": model.jitter,
        "ap_universe": list(model.ap_universe),
        "n_aps": model.n_features,
    }
    arrays = {
        "train_inputs": model.train_inputs,
        "target_means": model.target_means,
        "chol": model.chol,
        "alphas": model.alphas,
    }
    return meta, arrays


def model_bytes(model):
    if isinstance(model, DnnClassifier):
        meta, arrays = _dnn_payload(model)
    elif isinstance(model, GpModel):
        meta, arrays = _gp_payload(model)
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    meta.update(format=FORMAT, version=VERSION)
    return _write_zip(meta, arrays)


def save_model(path, model):
    atomic_write_bytes(path, model_bytes(model))


def load_model(path, expected_n_aps=None):
    """Load a model file; a mismatch with ``expected_n_aps`` is an error."""
    try:
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("meta.json"))
            arrays = {
                n[: -len(".npy")]: np.load(io.BytesIO(zf.read(n)), allow_pickle=False)
                for n in zf.namelist()
                if n.endswith(".npy")
            }
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: not a model file ({exc})") from None
    if meta.get("format") != FORMAT:
        raise ModelFormatError(f"{path}: unknown format {meta.get('format')!r}")
    if meta.get("version") != VERSION:
        raise ModelFormatError(f"{path}: unsupported version {meta.get('version')!r}")
    n_aps = meta.get("n_aps")
    if expected_n_aps is not None and n_aps != expected_n_aps:
        raise ModelFormatError(f"{path}: model expects {n_aps} APs, data has {expected_n_aps}")
    if meta["kind"] == "gp":
        model = GpModel(
            arrays["train_inputs"],
            arrays["target_means"],
            arrays["chol"],
            arrays["alphas"],
            GpConfig(**meta["config"]),
            meta["jitter"],
            tuple(meta["ap_universe"]),
        )
        if model.n_features != n_aps:
            raise ModelFormatError(f"{path}: n_aps {n_aps} disagrees with stored inputs")
        return model
    if meta["kind"] == "dnn":
        cfg = DnnConfig(**meta["config"])
        if cfg.n_aps != n_aps:
            raise ModelFormatError(f"{path}: n_aps {n_aps} disagrees with config")
        clf = DnnClassifier(
            build_encoder(cfg), build_head(cfg), tuple(meta["class_labels"]), cfg,
            tuple(meta["ap_universe"]),
        )
        for i, layer in enumerate(clf.layers):
            for name, value in layer.params.items():
                stored = arrays.get(f"layer{i}.{name}")
                if stored is None or stored.shape != value.shape:
                    raise ModelFormatError(f"{path}: tensor layer{i}.{name} missing or misshapen")
                layer.params[name] = stored.astype(np.float64)
        clf.batchnorm.running_mean = arrays["bn.running_mean"]
        clf.batchnorm.running_var = arrays["bn.running_var"]
        return clf
    raise ModelFormatError(f"{path}: unknown model kind {meta['kind']!r}")
