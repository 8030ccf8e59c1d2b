"""Deterministic artifact writers.

CSV files are UTF-8 with a header row; floats use the shortest round-trip
decimal (``repr``), so identical arrays give byte-identical files.  Ensembles
are written in long format ``sample,step,node,value`` (``channel`` is added for
q).  The binary dump is an uncompressed ``.npz`` holding the same arrays.
"""

import csv
import hashlib
import io
import json
import os
import platform
import zipfile

import numpy as np


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_table(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_ensemble_csv(path, arr, axes=("sample", "step", "node")):
    arr = np.asarray(arr, float)
    idx = np.indices(arr.shape).reshape(arr.ndim, -1).T.tolist()
    vals = arr.ravel().tolist()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(axes) + ",value\n")
        fh.write("".join(",".join(map(str, i)) + "," + repr(v) + "\n" for i, v in zip(idx, vals)))


def read_ensemble_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    data = np.atleast_2d(data)
    idx = data[:, :-1].astype(int)
    shape = tuple(idx.max(axis=0) + 1)
    out = np.zeros(shape)
    out[tuple(idx.T)] = data[:, -1]
    return out


def write_npz(path, **arrays):
    """Uncompressed ``.npz`` with fixed entry timestamps (np.savez stamps the clock)."""
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asanyarray(arrays[name]), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue())


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    raise TypeError(f"not serializable: {type(o)}")


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, cfg, files, command):
    """Plain-text MANIFEST with the config hash, versions, seeds and file digests."""
    import scipy

    from . import __version__
    lines = [
        f"command: {command}",
        f"config_name: {cfg.name}",
        f"config_hash: {cfg.config_hash()}",
        f"package_version: {__version__}",
        f"python: {platform.python_version()}",
        f"numpy: {np.__version__}",
        f"scipy: {scipy.__version__}",
        f"seeds: {','.join(str(s) for s in cfg.ensemble.seeds)}",
        f"n_samples: {cfg.ensemble.n_samples}",
        "files:",
    ]
    for f in sorted(files):
        lines.append(f"  {f} sha256={sha256_file(os.path.join(out_dir, f))}")
    path = os.path.join(out_dir, "MANIFEST")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return path
