"""Coarse space construction and the substructure preconditioner."""
import numpy as np
import pytest
import scipy.linalg as sla

from darcydd.bddc import BddcPreconditioner, ConstraintSet, build_constraints
from darcydd.errors import ConfigurationError, ConstraintDeficiencyError
from darcydd.mesh import generate_cross_fracture_cube
from darcydd.partition import Glob, InterfaceLayout, Partition

from support import build_pipeline, dense_operator, dense_sub_schur


CASES = [
    ("square4", 2, "arithmetic", True, True),
    ("square6", 4, "arithmetic", True, True),
    ("square6", 4, "arithmetic", False, True),
    ("square6", 4, "rho", True, True),
    ("square6", 4, "diag", True, True),
    ("cube2", 4, "arithmetic", True, True),
    ("cube2", 4, "arithmetic", True, False),
    ("frac2", 4, "arithmetic", True, True),
    ("frac2", 4, "diag", True, True),
    ("frac-hetero", 4, "rho", True, True),
]


@pytest.fixture
def meshes(square4, square6, cube2, frac2):
    return {
        "square4": square4,
        "square6": square6,
        "cube2": cube2,
        "frac2": frac2,
        "frac-hetero": generate_cross_fracture_cube(2, k1=1e3, k2=1e2, k3=1e-1),
    }


@pytest.mark.parametrize("name,n_sub,scheme,corners_on,edge_avg", CASES)
def test_preconditioner_properties(name, n_sub, scheme, corners_on, edge_avg, meshes):
    pipe = build_pipeline(
        meshes[name], n_sub, scheme=scheme, corners_on=corners_on,
        edge_averages=edge_avg,
    )
    prec = pipe.prec
    n = pipe.layout.n_interface

    for corr in prec.correctors:
        if corr.n_constraints == 0:
            continue
        d = corr.d.toarray()
        # the coarse basis interpolates its own constraints
        assert np.abs(d @ corr.phi - np.eye(corr.n_constraints)).max() <= 1e-10
        # the local coarse matrix is the constrained interface energy
        s_loc = dense_sub_schur(corr.sub)
        ref = -corr.phi.T @ s_loc @ corr.phi
        scale = max(1.0, np.abs(ref).max())
        assert np.abs(corr.s_cc - ref).max() <= 1e-9 * scale
        # energy minimization: the basis is orthogonal to null(D) in S_loc
        null = sla.null_space(d)
        if null.size:
            cross = null.T @ s_loc @ corr.phi
            assert np.abs(cross).max() <= 1e-9 * max(1.0, np.abs(s_loc).max())

    m = dense_operator(prec.apply, n)
    scale = np.abs(m).max()
    assert np.abs(m - m.T).max() <= 1e-10 * scale
    assert np.linalg.eigvalsh(0.5 * (m + m.T)).min() > 0

    # all eigenvalues of the preconditioned operator sit at or above one
    s_hat = pipe.op.to_dense()
    eigs = np.linalg.eigvals(m @ s_hat)
    assert np.abs(eigs.imag).max() <= 1e-8 * np.abs(eigs).max()
    assert eigs.real.min() > 1.0 - 1e-6


def test_threaded_application_identical(frac2, rng):
    p1 = build_pipeline(frac2, 4, threads=1)
    p4 = build_pipeline(frac2, 4, threads=4)
    r = rng.standard_normal(p1.layout.n_interface)
    assert np.array_equal(p1.prec.apply(r), p4.prec.apply(r))


def test_two_sub_coarse_problem(square4):
    pipe = build_pipeline(square4, 2)
    prec = pipe.prec
    assert prec.n_corners == 3
    assert prec.n_coarse == 4  # three corners plus one face average
    coarse = prec.coarse_matrix.toarray()
    assert np.abs(coarse - coarse.T).max() <= 1e-12 * np.abs(coarse).max()
    assert np.linalg.eigvalsh(coarse).max() < 0
    assert prec.coarse_fact.inertia == (0, 4, 0)


def test_coarse_count_cross_check(frac2):
    pipe = build_pipeline(frac2, 4)
    corner_set = set(pipe.corners)
    n_avg = sum(
        1
        for g in pipe.layout.globs
        if g.kind != "vertex" and not all(d in corner_set for d in g.dofs)
    )
    assert pipe.prec.n_coarse == pipe.prec.n_corners + n_avg


def test_corners_off_leaves_only_averages(square6):
    pipe = build_pipeline(square6, 4, corners_on=False)
    assert pipe.prec.n_corners == 0
    assert pipe.prec.n_coarse == pipe.layout.n_face_globs


def test_all_corner_constraints_make_exact_preconditioner(square6, rng):
    pipe = build_pipeline(square6, 4, with_prec=False)
    all_corners = list(range(pipe.layout.n_interface))
    constraints = build_constraints(pipe.layout, all_corners)
    from darcydd.partition import compute_weights

    weights = compute_weights(pipe.system, pipe.layout, "arithmetic")
    prec = BddcPreconditioner(pipe.subs, pipe.layout, weights, constraints)
    assert prec.n_coarse == pipe.layout.n_interface  # averages all consumed
    x = rng.standard_normal(pipe.layout.n_interface)
    back = prec.apply(pipe.op.apply(x))
    assert np.abs(back - x).max() <= 1e-8 * max(1.0, np.abs(x).max())


# ---------------------------------------------------------------------------
# constraint assembly on synthetic layouts


def synthetic_layout(globs, n_dofs, sub_has_natural):
    pts = np.zeros((n_dofs, 3))
    pts[:, 0] = np.arange(n_dofs)
    n_sub = len(sub_has_natural)
    local = []
    for s in range(n_sub):
        mine = [d for g in globs if s in g.sharing for d in g.dofs]
        local.append(np.array(sorted(mine), dtype=np.int64))
    return InterfaceLayout(
        partition=Partition(n_sub, np.zeros(1, dtype=np.int64)),
        mult_sharing=[g.sharing for g in globs for _ in g.dofs],
        interface_mults=np.arange(n_dofs),
        n_interface=n_dofs,
        local_dofs=local,
        globs=globs,
        barycenters=pts,
        sub_has_natural=np.array(sub_has_natural, dtype=bool),
    )


def face5_layout(sub_has_natural=(True, False)):
    globs = [Glob(kind="face", sharing=(0, 1), dofs=tuple(range(5)))]
    return synthetic_layout(globs, 5, list(sub_has_natural))


def test_constraint_rows_mixed():
    cs = build_constraints(face5_layout(), [0, 2, 4])
    assert cs.n_corners == 3
    assert cs.n_coarse == 4
    for s in range(2):
        d = cs.matrices[s].toarray()
        assert d.shape == (4, 5)
        assert np.linalg.matrix_rank(d) == 4
        assert np.array_equal(cs.coarse_ids[s], [0, 1, 2, 3])
    # three unit rows, then the average row over the whole glob
    assert np.array_equal(cs.matrices[0].toarray()[3], np.ones(5))


def test_constraint_rows_averages_only():
    cs = build_constraints(face5_layout(), [])
    assert cs.n_corners == 0
    assert cs.n_coarse == 1
    assert cs.matrices[1].shape == (1, 5)
    assert np.array_equal(cs.matrices[1].toarray()[0], np.ones(5))


def test_fully_promoted_glob_drops_average():
    cs = build_constraints(face5_layout(), [0, 1, 2, 3, 4])
    assert cs.n_corners == 5
    assert cs.n_coarse == 5  # no dependent average row appears
    assert cs.matrices[0].shape == (5, 5)
    assert np.abs(cs.matrices[0].toarray() - np.eye(5)).max() == 0


def test_floating_substructure_needs_constraints():
    globs = [Glob(kind="edge", sharing=(0, 1, 2), dofs=(0, 1, 2))]
    layout = synthetic_layout(globs, 3, [True, False, True])
    with pytest.raises(ConstraintDeficiencyError, match="floating"):
        build_constraints(layout, [], edge_averages=False)
    cs = build_constraints(layout, [], edge_averages=True)
    assert cs.n_coarse == 1
    assert all(m.shape == (1, 3) for m in cs.matrices)


def test_edge_average_toggle_row_counts():
    globs = [
        Glob(kind="face", sharing=(0, 1), dofs=(0, 1, 2)),
        Glob(kind="edge", sharing=(0, 1), dofs=(3, 4)),
    ]
    layout = synthetic_layout(globs, 5, [True, True])
    on = build_constraints(layout, [0], edge_averages=True)
    off = build_constraints(layout, [0], edge_averages=False)
    assert on.matrices[0].shape[0] == 3  # corner + face avg + edge avg
    assert off.matrices[0].shape[0] == 2
    assert on.n_coarse == 3
    assert off.n_coarse == 2


def test_vertex_globs_have_no_average():
    globs = [Glob(kind="vertex", sharing=(0, 1), dofs=(0,))]
    layout = synthetic_layout(globs, 1, [True, False])
    with pytest.raises(ConstraintDeficiencyError):
        build_constraints(layout, [])
    cs = build_constraints(layout, [0])
    assert cs.n_coarse == 1
    assert cs.n_corners == 1


def test_preconditioner_rejects_empty_interface(square4):
    pipe = build_pipeline(square4, 1, with_prec=False)
    empty = ConstraintSet(0, 0, [], [])
    with pytest.raises(ConfigurationError, match="interface"):
        BddcPreconditioner(pipe.subs, pipe.layout, [np.zeros(0)], empty)
