import numpy as np
import pytest

from skelgait.errors import InvalidConfig
from skelgait.graphs import derive_level_edges, is_connected
from skelgait.layouts import LAYOUT_NAMES, load_layout

# (joints, level-2 nodes, level-3 nodes) per bundled layout
EXPECTED_COUNTS = {
    "kinect20": (20, 10, 5),
    "kinect25": (25, 10, 5),
    "casia14": (14, 10, 5),
    "toy6": (6, 3, 2),
}


@pytest.mark.parametrize("name", LAYOUT_NAMES)
def test_node_counts(name):
    layout = load_layout(name)
    assert (layout.joint_count, layout.node_count(2), layout.node_count(3)) == EXPECTED_COUNTS[name]
    assert layout.node_count(1) == layout.joint_count


@pytest.mark.parametrize("name", LAYOUT_NAMES)
@pytest.mark.parametrize("level", [1, 2, 3])
def test_groups_are_disjoint_covers(name, level):
    layout = load_layout(name)
    seen = [j for members in layout.groups[level] for j in members]
    assert sorted(seen) == list(range(layout.joint_count))


@pytest.mark.parametrize("name", LAYOUT_NAMES)
@pytest.mark.parametrize("level", [2, 3])
def test_stored_edges_match_derivation_from_joint_edges(name, level):
    # grouped nodes touch iff any of their member joints touch
    layout = load_layout(name)
    derived = derive_level_edges(layout.edges[1], layout.groups[level])
    assert layout.edges[level] == derived


@pytest.mark.parametrize("name", LAYOUT_NAMES)
@pytest.mark.parametrize("level", [1, 2, 3])
def test_every_level_is_connected(name, level):
    layout = load_layout(name)
    n = layout.node_count(level)
    assert is_connected(n, layout.edges[level])


@pytest.mark.parametrize("name", LAYOUT_NAMES)
@pytest.mark.parametrize("level", [1, 2, 3])
def test_membership_matrix_rows_average_members(name, level):
    layout = load_layout(name)
    m = layout.membership_matrix(level)
    np.testing.assert_allclose(m.sum(axis=1), 1.0, atol=1e-15)
    rng = np.random.default_rng(0)
    frame = rng.normal(size=(layout.joint_count, 3))
    means = m @ frame
    for node, members in enumerate(layout.groups[level]):
        np.testing.assert_allclose(means[node], frame[list(members)].mean(axis=0), atol=1e-15)


@pytest.mark.parametrize("name", LAYOUT_NAMES)
def test_joint_to_node_agrees_with_groups(name):
    layout = load_layout(name)
    for level in (1, 2, 3):
        mapping = layout.joint_to_node(level)
        for node, members in enumerate(layout.groups[level]):
            assert all(mapping[j] == node for j in members)


@pytest.mark.parametrize("name", LAYOUT_NAMES)
def test_rest_pose_finite_and_scales_linearly(name):
    layout = load_layout(name)
    pose = layout.rest_pose()
    assert pose.shape == (layout.joint_count, 3)
    assert np.isfinite(pose).all()
    doubled = layout.rest_pose(offset_scale=np.full(layout.joint_count, 2.0))
    np.testing.assert_allclose(doubled, 2.0 * pose, atol=1e-12)


@pytest.mark.parametrize("name", LAYOUT_NAMES)
def test_reference_joint_in_range(name):
    layout = load_layout(name)
    assert 0 <= layout.reference_joint < layout.joint_count


def test_unknown_layout_rejected():
    with pytest.raises(InvalidConfig):
        load_layout("kinect99")


def test_layouts_are_cached():
    assert load_layout("toy6") is load_layout("toy6")


@pytest.mark.parametrize("name", LAYOUT_NAMES)
def test_joint_edges_form_a_tree(name):
    # level-1 connectivity comes from parent links: J - 1 edges, connected
    layout = load_layout(name)
    assert len(layout.edges[1]) == layout.joint_count - 1
    for a, b in layout.edges[1]:
        assert a < b
        assert layout.parents[b] == a or layout.parents[a] == b
