import pytest

from lbenergy.memory import MemoryTarget, MemoryTargetError, bound_allocations, check_target, numa_nodes


def test_parse():
    assert MemoryTarget.parse("default").node is None
    assert MemoryTarget.parse("numa:1").node == 1
    assert MemoryTarget.parse("NumaNode(2)").node == 2
    assert str(MemoryTarget.parse("numa:3")) == "numa:3"
    assert str(MemoryTarget.parse(None)) == "default"
    with pytest.raises(MemoryTargetError):
        MemoryTarget.parse("mcdram")


def test_numa_nodes_fake(tmp_path):
    for n in (0, 1):
        (tmp_path / f"node{n}").mkdir()
    (tmp_path / "possible").write_text("0-1\n")
    assert numa_nodes(str(tmp_path)) == [0, 1]
    assert numa_nodes(str(tmp_path / "missing")) == [0]


def test_check_target(tmp_path):
    (tmp_path / "node0").mkdir()
    check_target(MemoryTarget(None), str(tmp_path))
    with pytest.raises(MemoryTargetError, match="multi-node"):
        check_target(MemoryTarget(0), str(tmp_path))
    (tmp_path / "node1").mkdir()
    check_target(MemoryTarget(1), str(tmp_path))
    with pytest.raises(MemoryTargetError, match="does not exist"):
        check_target(MemoryTarget(5), str(tmp_path))


def test_default_binding_is_noop():
    with bound_allocations(MemoryTarget(None)):
        pass


@pytest.mark.skipif(len(numa_nodes()) >= 2, reason="single-node behavior")
def test_numa_request_fails_loudly_on_single_node():
    with pytest.raises(MemoryTargetError):
        with bound_allocations(MemoryTarget(0)):
            pass


@pytest.mark.skipif(len(numa_nodes()) < 2, reason="needs a multi-node machine")
def test_bind_on_multi_node():
    import numpy as np

    with bound_allocations(MemoryTarget(numa_nodes()[-1])):
        a = np.ones(1 << 16)
    assert a.sum() == 1 << 16
