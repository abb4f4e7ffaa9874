import pytest

from core.mesh_store import MeshStore
from geometry.mesh import generate_annulus, write_mesh


class DummyBus:
    def __init__(self):
        self.events = []

    def publish_nowait(self, event, payload=None):
        self.events.append((event, payload))


def test_builtin_mesh(tmp_path):
    bus = DummyBus()
    store = MeshStore(data_dir=str(tmp_path), event_bus=bus)
    mesh = store.load_mesh('disk4')
    assert mesh.family == 'disk'
    assert mesh.n_vertices == 1 + 3 * 4 * 5
    assert store.describe('disk4').source == 'builtin'
    assert bus.events == [('mesh.loaded', 'disk4')]


def test_builtin_families(tmp_path):
    store = MeshStore(data_dir=str(tmp_path), event_bus=DummyBus())
    assert store.load_mesh('mobius8').family == 'mobius'
    assert store.load_mesh('ribbon8').family == 'ribbon'
    assert store.load_mesh('sphere-minus-cap2').family == 'cap'


def test_unknown_mesh(tmp_path):
    store = MeshStore(data_dir=str(tmp_path), event_bus=DummyBus())
    with pytest.raises(KeyError):
        store.load_mesh('torus8')
    with pytest.raises(KeyError):
        store.load_mesh('disk')


def test_discover_and_load(tmp_path, monkeypatch):
    write_mesh(generate_annulus(0.5, 1.0, 2), tmp_path / 'sample.cslmesh')
    (tmp_path / 'notes.txt').write_text('ignored')
    monkeypatch.setenv('CSL_DATA_DIR', str(tmp_path))
    store = MeshStore(event_bus=DummyBus())
    assert list(store.list_meshes()) == ['sample']
    meta = store.describe('sample')
    assert meta.source == 'file'
    assert len(meta.sha256) == 64
    assert store.load_mesh('sample').family == 'annulus'


def test_load_by_path(tmp_path):
    path = tmp_path / 'ring.cslmesh'
    write_mesh(generate_annulus(0.5, 1.0, 2), path)
    store = MeshStore(data_dir=str(tmp_path / 'missing'), event_bus=DummyBus())
    assert store.list_meshes() == {}
    assert store.load_mesh(str(path)).n_triangles > 0


def test_cache_returns_same_object(tmp_path):
    bus = DummyBus()
    store = MeshStore(data_dir=str(tmp_path), event_bus=bus)
    assert store.load_mesh('annulus2') is store.load_mesh('annulus2')
    assert len(bus.events) == 1
