from pathlib import Path

import numpy as np

from shear_damping.cache_meta import build_slice_descriptor, hash_array, hash_config, is_cache_current
from shear_damping.db import SliceCache
from shear_damping.evolution import initial_data
from shear_damping.spectral import assemble_stream, eps_schedule


def test_slice_roundtrip_counts_hits_and_misses(tmp_path: Path):
    cache = SliceCache(tmp_path / "slices.sqlite")
    values = np.array([0.0, 1.0 + 2.0j, -3.5j])
    assert cache.get_slice("v1", 1, 0.5, 0.125, 1) is None
    cache.put_slices("v1", [(1, 0.5, 0.125, 1, values, 1e-14)])
    hit = cache.get_slice("v1", 1, 0.5, 0.125, 1)
    assert np.array_equal(hit, values)
    assert (cache.hits, cache.misses) == (1, 1)
    assert cache.get_slice("v1", 1, 0.5, 0.125, -1) is None
    assert cache.get_slice("v2", 1, 0.5, 0.125, 1) is None
    cache.close()


def test_put_slices_upserts(tmp_path: Path):
    cache = SliceCache(tmp_path / "slices.sqlite")
    cache.put_slices("v1", [(2, 0.25, 0.0625, -1, np.zeros(4, dtype=complex), 0.0)])
    cache.put_slices("v1", [(2, 0.25, 0.0625, -1, np.ones(4, dtype=complex), 0.0)])
    assert cache.count("v1") == 1
    assert np.array_equal(cache.get_slice("v1", 2, 0.25, 0.0625, -1), np.ones(4))
    cache.close()


def test_nearby_heights_do_not_collide(tmp_path: Path):
    cache = SliceCache(tmp_path / "slices.sqlite")
    y0 = 0.1
    cache.put_slices("v1", [(1, y0, 0.125, 1, np.ones(2, dtype=complex), 0.0)])
    assert cache.get_slice("v1", 1, np.nextafter(y0, 1.0), 0.125, 1) is None
    cache.close()


def test_descriptor_tracks_resolution_and_data(couette):
    y = np.linspace(0.0, 1.0, 65)
    omega0 = np.asarray(initial_data(couette, {"kind": "gevrey_bump"})(y))
    base = build_slice_descriptor(profile=couette.descriptor(), omega0=omega0, n=64)
    again = build_slice_descriptor(profile=couette.descriptor(), omega0=omega0.copy(), n=64)
    finer = build_slice_descriptor(profile=couette.descriptor(), omega0=omega0, n=128)
    scaled = build_slice_descriptor(profile=couette.descriptor(), omega0=2.0 * omega0, n=64)
    assert base == again
    assert base["cache_version"] != finer["cache_version"]
    assert base["cache_version"] != scaled["cache_version"]
    assert is_cache_current(base, again["cache_version"])
    assert not is_cache_current(None, base["cache_version"])
    assert hash_array(omega0) == base["data_hash"]


def test_config_hash_ignores_key_order():
    assert hash_config({"a": 1, "b": [1, 2]}) == hash_config({"b": [1, 2], "a": 1})
    assert hash_config({"a": 1}) != hash_config({"a": 2})


def test_descriptor_is_registered_once(tmp_path: Path, couette):
    cache = SliceCache(tmp_path / "slices.sqlite")
    descriptor = build_slice_descriptor(profile=couette.descriptor(), omega0=np.zeros(3), n=2)
    cache.register(descriptor)
    assert cache.get_descriptor(descriptor["cache_version"]) == descriptor
    assert cache.get_descriptor("missing") is None
    cache.close()


def test_assembly_reuses_cached_slices(tmp_path: Path, couette):
    omega0 = initial_data(couette, {"kind": "gevrey_bump"})
    schedule = eps_schedule(2, 3)
    cache = SliceCache(tmp_path / "slices.sqlite")
    first = assemble_stream([0.0, 2.0], 1, omega0, couette, n=64, schedule=schedule, cache=cache)
    stored = cache.count()
    assert first.cache_hits == 0
    assert stored == 65 * 2 * len(schedule)
    second = assemble_stream([0.0, 2.0], 1, omega0, couette, n=64, schedule=schedule, cache=cache)
    assert second.cache_hits == stored
    assert cache.count() == stored
    assert np.array_equal(first.values, second.values)
    cache.close()
