import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import random_network, random_params
from prodhawkes import formats
from prodhawkes.core import EventLog, ModelParams, Network
from prodhawkes.formats import DataError


@given(st.lists(st.tuples(st.floats(0, 1e6), st.integers(0, 4), st.integers(0, 2)), max_size=30),
       st.booleans())
def test_events_roundtrip(tmp_path_factory, rows, truncated):
    path = tmp_path_factory.mktemp("ev") / "e.csv"
    log = EventLog([r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows], 5, 3,
                   0.0, 2e6, truncated=truncated)
    formats.write_events(path, log)
    back = formats.read_events(path)
    for name in ("times", "users", "products"):
        np.testing.assert_array_equal(getattr(back, name), getattr(log, name))
    assert (back.t0, back.T, back.num_users, back.num_products, back.truncated) == \
        (log.t0, log.T, 5, 3, truncated)
    assert path.read_bytes().count(b"\r") == 0


def test_network_roundtrip(tmp_path, rng):
    net = random_network(7, 0.3, rng)
    formats.write_network(tmp_path / "n.csv", net)
    back, first = formats.read_network(tmp_path / "n.csv")
    assert back == net and first is None
    ft = {e: float(i) + 0.1 for i, e in enumerate(net.edges)}
    formats.write_network(tmp_path / "g.csv", net, ft)
    back, first = formats.read_network(tmp_path / "g.csv")
    assert back == net and first == ft
    iso = Network(4, ())
    formats.write_network(tmp_path / "i.csv", iso)
    assert formats.read_network(tmp_path / "i.csv")[0] == iso


def test_params_roundtrip(tmp_path, rng):
    p = random_params(3, 2, rng, omega=0.37)
    formats.write_params(tmp_path / "p.json", p)
    back = formats.read_params(tmp_path / "p.json")
    assert back == p
    text = (tmp_path / "p.json").read_text()
    assert '"format_version": 1' in text


def test_bad_lines_report_numbers(tmp_path):
    f = tmp_path / "e.csv"
    f.write_text("time,user,product\n1.0,0,0\n2.0,x,0\n")
    with pytest.raises(DataError) as err:
        formats.read_events(f)
    assert err.value.line == 3
    f.write_text("time,user,product\n1.0,0,5\n")
    with pytest.raises(DataError) as err:
        formats.read_events(f, num_users=2, num_products=2)
    assert err.value.line == 2
    f.write_text("src,dst\n0,1\n1\n")
    with pytest.raises(DataError) as err:
        formats.read_network(f)
    assert err.value.line == 3
    f.write_text("user,time\n")
    with pytest.raises(DataError):
        formats.read_events(f)
    (tmp_path / "p.json").write_text('{"format_version": 99}')
    with pytest.raises(DataError):
        formats.read_params(tmp_path / "p.json")
