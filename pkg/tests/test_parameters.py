import numpy as np
import pytest

from core.errors import CheckpointError
from core.parameters import ParameterStore, ParamSpec, xavier_uniform

SPECS = [ParamSpec("W", (3, 5)), ParamSpec("b", (1, 3), "bias"), ParamSpec("v", (1, 5))]


def test_initialize_is_seeded():
    a = ParameterStore.initialize(SPECS, seed=7)
    b = ParameterStore.initialize(SPECS, seed=7)
    c = ParameterStore.initialize(SPECS, seed=8)
    assert all(np.array_equal(a[n].data, b[n].data) for n in a.names())
    assert not np.array_equal(a["W"].data, c["W"].data)


def test_biases_start_at_zero():
    store = ParameterStore.initialize(SPECS, seed=0)
    assert np.array_equal(store["b"].data, np.zeros((1, 3)))


def test_xavier_variance():
    values = xavier_uniform((1000, 1000), np.random.default_rng(0))
    expected = 2.0 / 2000
    assert abs(values.var() - expected) / expected < 0.1
    assert np.abs(values).max() <= np.sqrt(6.0 / 2000)


def test_declaration_order_and_size():
    store = ParameterStore.initialize(SPECS, seed=0)
    assert store.names() == ["W", "b", "v"]
    assert store.size == 15 + 3 + 5
    assert "W" in store and "x" not in store


def test_duplicate_name_rejected():
    store = ParameterStore()
    store.add("W", np.zeros((1, 1)))
    with pytest.raises(KeyError):
        store.add("W", np.zeros((1, 1)))


def test_snapshot_restore():
    store = ParameterStore.initialize(SPECS, seed=0)
    saved = store.snapshot()
    store["W"].data[...] = 0.0
    store.restore(saved)
    assert np.array_equal(store["W"].data, saved["W"])


def test_copy_is_independent():
    store = ParameterStore.initialize(SPECS, seed=0)
    clone = store.copy()
    clone["W"].data[0, 0] += 1.0
    assert store["W"].data[0, 0] != clone["W"].data[0, 0]


def test_dict_round_trip_is_exact():
    store = ParameterStore.initialize(SPECS, seed=3)
    back = ParameterStore.from_dict(store.to_dict())
    assert back.names() == store.names()
    for name in store.names():
        assert np.array_equal(back[name].data, store[name].data)


def test_from_dict_rejects_wrong_value_count():
    with pytest.raises(CheckpointError, match="'W'"):
        ParameterStore.from_dict({"W": {"shape": [2, 2], "values": [1.0, 2.0, 3.0]}})


def test_check_shapes():
    store = ParameterStore.initialize(SPECS, seed=0)
    store.check_shapes(SPECS)
    with pytest.raises(CheckpointError, match="reshaped: \\['W'\\]"):
        store.check_shapes([ParamSpec("W", (5, 3)), SPECS[1], SPECS[2]])
    with pytest.raises(CheckpointError, match="missing/extra: \\['v'\\]"):
        store.check_shapes(SPECS[:2])
