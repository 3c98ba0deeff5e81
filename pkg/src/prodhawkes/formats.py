"""Plain-text file formats for events, networks and fitted parameters.

Events: CSV ``time,user,product`` preceded by a ``# window=t0,T users=V products=P``
comment. Networks: CSV ``src,dst[,first_time]`` (``dst`` observes ``src``)
preceded by ``# users=V``. Parameters: JSON with a ``format_version`` field,
sorted keys, row-major ``A`` and ``B``.
"""

from __future__ import annotations

import csv
import json
import re
from pathlib import Path

import numpy as np

from .core import EventLog, ModelParams, Network

PARAMS_FORMAT_VERSION = 1


class DataError(ValueError):
    """Malformed or inconsistent input data."""

    def __init__(self, msg: str, path=None, line: int | None = None):
        where = f"{path}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(where + msg)
        self.line = line


def _fmt(x: float) -> str:
    return repr(float(x))


def _read_rows(path):
    """Yield ``(line_number, fields, meta)``; comment lines fill ``meta``."""
    meta = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            if line.startswith("#"):
                for key, val in re.findall(r"(\w+)=(\S+)", line):
                    meta[key] = val
                continue
            yield lineno, next(csv.reader([line])), meta


def write_events(path, log: EventLog) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# window={_fmt(log.t0)},{_fmt(log.T)} users={log.num_users} "
                 f"products={log.num_products} truncated={int(log.truncated)}\n")
        fh.write("time,user,product\n")
        for t, u, p in zip(log.times, log.users, log.products):
            fh.write(f"{_fmt(t)},{int(u)},{int(p)}\n")


def read_events(path, num_users: int | None = None, num_products: int | None = None,
                window: tuple | None = None) -> EventLog:
    times, users, prods = [], [], []
    meta = {}
    header_seen = False
    for lineno, fields, meta in _read_rows(path):
        if not header_seen:
            if [f.strip() for f in fields] != ["time", "user", "product"]:
                raise DataError("expected header 'time,user,product'", path, lineno)
            header_seen = True
            continue
        if len(fields) != 3:
            raise DataError(f"expected 3 fields, got {len(fields)}", path, lineno)
        try:
            t, u, p = float(fields[0]), int(fields[1]), int(fields[2])
        except ValueError as exc:
            raise DataError(f"cannot parse {fields!r}: {exc}", path, lineno) from None
        if not np.isfinite(t) or t < 0:
            raise DataError(f"invalid time {fields[0]!r}", path, lineno)
        if u < 0 or p < 0:
            raise DataError("negative user or product id", path, lineno)
        if num_users is not None and u >= num_users:
            raise DataError(f"unknown user id {u}", path, lineno)
        if num_products is not None and p >= num_products:
            raise DataError(f"unknown product id {p}", path, lineno)
        times.append(t)
        users.append(u)
        prods.append(p)
    if not header_seen:
        raise DataError("missing header", path)
    if window is None and "window" in meta:
        t0, T = (float(x) for x in meta["window"].split(","))
    elif window is not None:
        t0, T = window
    else:
        t0, T = 0.0, None
    V = num_users if num_users is not None else int(meta.get("users", max(users, default=-1) + 1))
    P = num_products if num_products is not None else int(meta.get("products", max(prods, default=-1) + 1))
    if users and max(users) >= V:
        raise DataError(f"unknown user id {max(users)}", path)
    if prods and max(prods) >= P:
        raise DataError(f"unknown product id {max(prods)}", path)
    try:
        return EventLog(times, users, prods, V, P, t0, T, truncated=meta.get("truncated") == "1")
    except ValueError as exc:
        raise DataError(str(exc), path) from None


def write_network(path, net: Network, first_edge_time: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# users={net.num_users}\n")
        if first_edge_time is None:
            fh.write("src,dst\n")
            for v, u in net.edges:
                fh.write(f"{v},{u}\n")
        else:
            fh.write("src,dst,first_time\n")
            for v, u in net.edges:
                fh.write(f"{v},{u},{_fmt(first_edge_time[(v, u)])}\n")


def read_network(path):
    """Returns ``(network, first_edge_time or None)``."""
    edges = []
    first = {}
    header = None
    meta = {}
    for lineno, fields, meta in _read_rows(path):
        if header is None:
            header = [f.strip() for f in fields]
            if header not in (["src", "dst"], ["src", "dst", "first_time"]):
                raise DataError("expected header 'src,dst[,first_time]'", path, lineno)
            continue
        if len(fields) != len(header):
            raise DataError(f"expected {len(header)} fields, got {len(fields)}", path, lineno)
        try:
            v, u = int(fields[0]), int(fields[1])
            if len(fields) == 3:
                first[(v, u)] = float(fields[2])
        except ValueError as exc:
            raise DataError(f"cannot parse {fields!r}: {exc}", path, lineno) from None
        if v < 0 or u < 0:
            raise DataError("negative node id", path, lineno)
        edges.append((v, u))
    if header is None:
        raise DataError("missing header", path)
    n = int(meta.get("users", max((max(e) for e in edges), default=-1) + 1))
    try:
        net = Network(n, tuple(edges))
    except (ValueError, IndexError) as exc:
        raise DataError(str(exc), path) from None
    return net, (first if header[-1] == "first_time" else None)


def params_to_dict(params: ModelParams) -> dict:
    users = {}
    for u in range(params.num_users):
        users[str(u)] = {"mu": params.mu[u].tolist(), "A": params.A[u].ravel().tolist(),
                         "B": params.B[u].ravel().tolist()}
    return {"format_version": PARAMS_FORMAT_VERSION, "omega": params.omega,
            "num_users": params.num_users, "num_products": params.num_products, "users": users}


def params_from_dict(d: dict) -> ModelParams:
    if d.get("format_version") != PARAMS_FORMAT_VERSION:
        raise DataError(f"unsupported params format_version {d.get('format_version')!r}")
    V, P = int(d["num_users"]), int(d["num_products"])
    mu = np.zeros((V, P))
    A = np.zeros((V, P, P))
    B = np.zeros((V, P, P))
    for key, row in d["users"].items():
        u = int(key)
        if not 0 <= u < V:
            raise DataError(f"unknown user id {u}")
        mu[u] = row["mu"]
        A[u] = np.reshape(row["A"], (P, P))
        B[u] = np.reshape(row["B"], (P, P))
    return ModelParams(mu, A, B, float(d["omega"]))


def write_params(path, params: ModelParams) -> None:
    Path(path).write_text(json.dumps(params_to_dict(params), sort_keys=True, indent=1) + "\n",
                          encoding="utf-8")


def read_params(path) -> ModelParams:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        return params_from_dict(d)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"malformed params file: {exc}", path) from None


def read_mentions(path):
    """Rows ``(time, mentioner, mentioned)`` with string ids, in file order."""
    rows = []
    header_seen = False
    for lineno, fields, _ in _read_rows(path):
        if not header_seen:
            if [f.strip() for f in fields] != ["time", "mentioner", "mentioned"]:
                raise DataError("expected header 'time,mentioner,mentioned'", path, lineno)
            header_seen = True
            continue
        if len(fields) != 3:
            raise DataError(f"expected 3 fields, got {len(fields)}", path, lineno)
        try:
            t = float(fields[0])
        except ValueError:
            raise DataError(f"invalid time {fields[0]!r}", path, lineno) from None
        rows.append((lineno, t, fields[1].strip(), fields[2].strip()))
    return rows


def read_raw_events(path):
    """Rows ``(time, user, product)`` with string ids."""
    rows = []
    header_seen = False
    for lineno, fields, _ in _read_rows(path):
        if not header_seen:
            if [f.strip() for f in fields] != ["time", "user", "product"]:
                raise DataError("expected header 'time,user,product'", path, lineno)
            header_seen = True
            continue
        if len(fields) != 3:
            raise DataError(f"expected 3 fields, got {len(fields)}", path, lineno)
        try:
            t = float(fields[0])
        except ValueError:
            raise DataError(f"invalid time {fields[0]!r}", path, lineno) from None
        rows.append((lineno, t, fields[1].strip(), fields[2].strip()))
    return rows
