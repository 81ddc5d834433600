import json
import logging
import os
import struct

import numpy as np

SNAPSHOT_MAGIC = b"GKDVSNAP"
# magic, n, L, t
SNAPSHOT_HEADER = struct.Struct("<8sqdd")


def config_header(config):
    """
    Renders the resolved configuration as a block of '#'-prefixed lines.
    """
    text = json.dumps(config, sort_keys=True, indent=2, default=str)
    return "".join(f"# {line}\n" for line in text.splitlines())


def write_table(path, columns, rows, config, delimiter="\t"):
    """
    Writes rows of numbers as delimiter-separated text, preceded by the config
    header and a column line. Floats use repr precision so reruns are byte-identical.
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        f.write(config_header(config))
        f.write("# " + delimiter.join(columns) + "\n")
        for row in rows:
            f.write(delimiter.join(_format_cell(cell) for cell in row) + "\n")
    logging.info(f"Wrote {len(rows)} rows to {path}")
    return path


def _format_cell(cell):
    if isinstance(cell, (float, np.floating)):
        return repr(float(cell))
    return str(cell)


def read_table(path, delimiter="\t"):
    """
    Reads a table written by write_table, skipping the header block.
    """
    return np.loadtxt(path, delimiter=delimiter, comments="#", ndmin=2)


def write_snapshot(path, values, L, t):
    """
    Writes a real field as little-endian float64 after a 32-byte header.
    """
    values = np.ascontiguousarray(values, dtype="<f8")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as f:
        f.write(SNAPSHOT_HEADER.pack(SNAPSHOT_MAGIC, len(values), float(L), float(t)))
        f.write(values.tobytes())
    logging.debug(f"Snapshot t={t} written to {path}")
    return path


def read_snapshot(path):
    """
    Returns (values, L, t) from a snapshot file.
    """
    with open(path, "rb") as f:
        magic, n, L, t = SNAPSHOT_HEADER.unpack(f.read(SNAPSHOT_HEADER.size))
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"{path} is not a field snapshot.")
        values = np.frombuffer(f.read(8 * n), dtype="<f8")
    return values, L, t


def write_summary(path, summary, config):
    """
    Writes a JSON report holding the resolved configuration and the run summary.
    Complex numbers are stored as [re, im] pairs.
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        json.dump({"config": config, "summary": summary}, f, sort_keys=True, indent=2, default=_encode)
        f.write("\n")
    logging.info(f"Wrote summary to {path}")
    return path


def _encode(value):
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)
