"""Byte-reproducible zip archives of a JSON manifest plus ``.npy`` arrays.

``np.savez`` stamps entries with the wall clock, so two saves of the same
model differ on disk. Here every entry gets a fixed timestamp and entries are
written in sorted order.
"""
import io
import json
import zipfile

import numpy as np

_EPOCH = (1980, 1, 1, 0, 0, 0)
MANIFEST = "manifest.json"


def _entry(name):
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    return info


def write_archive(path, manifest, arrays):
    with zipfile.ZipFile(path, "w") as zf:
        zf.writestr(_entry(MANIFEST), json.dumps(manifest, sort_keys=True, indent=1))
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arrays[name]), allow_pickle=False)
            zf.writestr(_entry(name + ".npy"), buf.getvalue())


def read_archive(path):
    arrays = {}
    with zipfile.ZipFile(path, "r") as zf:
        manifest = json.loads(zf.read(MANIFEST))
        for name in zf.namelist():
            if name.endswith(".npy"):
                arrays[name[:-4]] = np.lib.format.read_array(io.BytesIO(zf.read(name)), allow_pickle=False)
    return manifest, arrays
