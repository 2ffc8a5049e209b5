"""Assembly of residuals, Jacobians and coefficient derivatives.

The discrete momentum residual tested against a velocity basis function
phi is

    (B S(Dv), grad phi) + mu0 (grad v, grad phi)
        + (tau S(v), phi) on the bed - (pi, div phi) + (f, phi)

with S the power-law kernels, D the symmetric gradient and f the body
force; pressure-test entries are (div v, q).  The assembled operator is
the standard symmetric saddle form [[K, C], [C^T, 0]] with the coupling
C tested as -(pi, div phi), which corresponds to scaling the continuity
rows by -1.  ``solver_sign`` exposes that convention so solvers and
finite-difference checks can flip the pressure block of the residual
consistently.

All element loops are vectorized over triangles per quadrature point;
duplicate COO entries are summed by scipy in a fixed order, so serial
assembly is bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.io import mmwrite

from .spaces import (SpaceKind, basal_coeff_on_edges, scalar_values_at_quadrature,
                     velocity_gradients_at_quadrature, velocity_local_coeffs,
                     velocity_trace)
from .tensor_ops import s_gamma, s_omega


@dataclass
class AssembledSystem:
    """Sparse symmetric operator with right-hand side and constraint list.

    ``matrix`` is the full (unconstrained) saddle-point operator;
    ``constrained_dofs`` lists the rotated-frame dofs eliminated by
    :meth:`reduced`, which applies symmetric row/column elimination with
    unit diagonal.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    constrained_dofs: np.ndarray
    spaces: object
    _reduced: sp.csr_matrix = field(default=None, repr=False)

    def reduced(self):
        if self._reduced is None:
            self._reduced = self.spaces.eliminate(self.matrix)
        return self._reduced


def solver_sign(spaces):
    """Sign vector (+1 velocity rows, -1 pressure rows) relating the
    plain residual to the symmetric-operator convention."""
    sign = np.ones(spaces.n_sys)
    sign[spaces.n_u:] = -1.0
    return sign


def _require_spaces(field_, kind):
    if field_.space.kind is not kind:
        raise ValueError("expected a %s field, got %s"
                         % (kind.value, field_.space.kind.value))
    return field_.space.parent


def _check_args(velocity, rheology, friction):
    spaces = _require_spaces(velocity, SpaceKind.VELOCITY_P2_VEC)
    if rheology.space.kind is not SpaceKind.COEFF_OMEGA_P1 \
            or rheology.space.mesh is not spaces.mesh:
        raise ValueError("rheology field must live on the same mesh's vertex space")
    if friction.space.kind is not SpaceKind.COEFF_BASAL_P1 \
            or friction.space.mesh is not spaces.mesh:
        raise ValueError("friction field must live on the same mesh's bed chain")
    return spaces


def _vel_scatter(spaces):
    """COO index arrays for 12x12 velocity element blocks."""
    cache = spaces._cache
    if "vel_scatter" not in cache:
        dofs = spaces.tri_vel_dofs
        rows = np.repeat(dofs[:, :, None], 12, axis=2)
        cols = np.repeat(dofs[:, None, :], 12, axis=1)
        cache["vel_scatter"] = (rows.ravel(), cols.ravel())
    return cache["vel_scatter"]


def _bed_scatter(spaces):
    """COO index arrays for 6x6 bed-edge element blocks."""
    cache = spaces._cache
    if "bed_scatter" not in cache:
        nodes = spaces.bedge_nodes[spaces.basal_edge_indices]       # (k, 3)
        dofs = (2 * nodes[:, :, None] + np.arange(2)).reshape(-1, 6)
        rows = np.repeat(dofs[:, :, None], 6, axis=2)
        cols = np.repeat(dofs[:, None, :], 6, axis=1)
        cache["bed_scatter"] = (rows.ravel(), cols.ravel())
    return cache["bed_scatter"]


def coupling_matrix(spaces):
    """Velocity-pressure coupling C with C[(a,c), k] = -(psi_k, d_c phi_a),
    cached per mesh; the full operator uses [[K, C], [C^T, 0]]."""
    cache = spaces._cache
    if "coupling" not in cache:
        q = spaces.quadrature
        nt = spaces.mesh.num_triangles
        blocks = np.zeros((nt, 12, 3))
        for iq in range(q.tri_points.shape[0]):
            detw = q.tri_weights[iq] * spaces.det
            G = spaces.phys_grads[:, iq]                 # (nt, 6, 2)
            psi = spaces.p1_vals[iq]                     # (3,)
            # div of basis (a, c) is G[t, a, c]
            blocks -= np.einsum("t,tac,k->tack", detw, G,
                                psi).reshape(nt, 12, 3)
        rows = np.repeat(spaces.tri_vel_dofs[:, :, None], 3, axis=2).ravel()
        cols = np.repeat(spaces.mesh.triangles[:, None, :], 12, axis=1).ravel()
        C = sp.coo_matrix((blocks.ravel(), (rows, cols)),
                          shape=(spaces.n_u, spaces.mesh.num_vertices)).tocsr()
        cache["coupling"] = C
    return cache["coupling"]


def _strain_state(spaces, velocity, params):
    """Velocity gradient, symmetric part and shifted magnitude per
    quadrature point."""
    grad = velocity_gradients_at_quadrature(velocity)           # (nt, nq, 2, 2)
    strain = 0.5 * (grad + np.swapaxes(grad, 2, 3))
    mag2 = (strain ** 2).sum(axis=(2, 3)) + params.delta ** 2
    return grad, strain, mag2


def _residual_raw(velocity, pressure, rheology, friction, params):
    """Unprojected dual vector of the momentum/continuity residual."""
    spaces = _check_args(velocity, rheology, friction)
    q = spaces.quadrature
    nt = spaces.mesh.num_triangles
    grad, strain, _ = _strain_state(spaces, velocity, params)
    S = s_omega(strain, params)                                  # (nt, nq, 2, 2)
    B_q = scalar_values_at_quadrature(rheology)                  # (nt, nq)
    pi_q = scalar_values_at_quadrature(pressure)
    div_v = grad[:, :, 0, 0] + grad[:, :, 1, 1]
    f = np.asarray(params.body_force)

    out = np.zeros(spaces.n_sys)
    r_u = np.zeros((nt, 6, 2))
    r_p = np.zeros((nt, 3))
    for iq in range(q.tri_points.shape[0]):
        detw = q.tri_weights[iq] * spaces.det
        G = spaces.phys_grads[:, iq]
        r_u += np.einsum("t,tcj,taj->tac", detw * B_q[:, iq], S[:, iq], G)
        r_u += params.mu0 * np.einsum("t,tcj,taj->tac", detw, grad[:, iq], G)
        r_u -= np.einsum("t,tac->tac", detw * pi_q[:, iq], G)
        r_u -= np.einsum("t,a,c->tac", detw, spaces.p2_vals[iq], f)
        r_p += np.einsum("t,k->tk", detw * div_v[:, iq], spaces.p1_vals[iq])
    np.add.at(out, spaces.tri_vel_dofs.ravel(), r_u.reshape(nt, 12).ravel())
    np.add.at(out, spaces.n_u + spaces.mesh.triangles.ravel(), r_p.ravel())

    bed = spaces.basal_edge_indices
    if bed.size:
        v_m = velocity_trace(velocity, bed)                      # (k, m, 2)
        tau_m = basal_coeff_on_edges(friction)                   # (k, m)
        Sg = s_gamma(v_m, params)
        nodes = spaces.bedge_nodes[bed]
        dofs = (2 * nodes[:, :, None] + np.arange(2)).reshape(-1, 6)
        lengths = spaces.bedge_lengths[bed]
        r_e = np.zeros((bed.size, 3, 2))
        for im in range(q.edge_points.shape[0]):
            lw = q.edge_weights[im] * lengths
            r_e += np.einsum("k,kc,a->kac", lw * tau_m[:, im], Sg[:, im],
                             spaces.edge_trace_vals[im])
        np.add.at(out, dofs.ravel(), r_e.reshape(-1, 6).ravel())
    return out


def assemble_residual(velocity, pressure, rheology, friction, params):
    """Dual vector of the discrete residual at the given state.

    Velocity-test entries hold the momentum residual including the body
    force, pressure-test entries hold (div v, q).  Constrained
    components (rotated frame) are zeroed; pairing with any
    constraint-satisfying field is unaffected by that projection.
    """
    spaces = _check_args(velocity, rheology, friction)
    return spaces.project_dual(_residual_raw(velocity, pressure, rheology,
                                             friction, params))


def _jacobian_velocity_block(spaces, velocity, rheology, friction, params):
    """COO data for the velocity-velocity block of the derivative."""
    if params.delta <= 0.0:
        raise ValueError("Jacobian assembly needs delta > 0, got %r" % (params.delta,))
    q = spaces.quadrature
    nt = spaces.mesh.num_triangles
    _, strain, mag2 = _strain_state(spaces, velocity, params)
    B_q = scalar_values_at_quadrature(rheology)
    c1 = (params.p - 2.0) * mag2 ** ((params.p - 4.0) / 2.0)
    c2 = mag2 ** ((params.p - 2.0) / 2.0)
    eye2 = np.eye(2)

    blocks = np.zeros((nt, 6, 2, 6, 2))
    for iq in range(q.tri_points.shape[0]):
        detw = q.tri_weights[iq] * spaces.det
        G = spaces.phys_grads[:, iq]
        GG = np.einsum("tad,tbd->tab", G, G)
        # (Dv : D phi_(a, c)) = (Dv @ grad N_a)_c for symmetric Dv
        Qv = np.einsum("tij,taj->tai", strain[:, iq], G)
        w2 = detw * B_q[:, iq] * c2[:, iq]
        blocks += np.einsum("t,tab,cd->tacbd", detw * params.mu0 + 0.5 * w2, GG, eye2)
        blocks += np.einsum("t,tad,tbc->tacbd", 0.5 * w2, G, G)
        blocks += np.einsum("t,tac,tbd->tacbd", detw * B_q[:, iq] * c1[:, iq], Qv, Qv)
    data = [blocks.reshape(nt, 12, 12).ravel()]
    rows, cols = _vel_scatter(spaces)
    indices = [(rows, cols)]

    bed = spaces.basal_edge_indices
    if bed.size:
        v_m = velocity_trace(velocity, bed)
        tau_m = basal_coeff_on_edges(friction)
        vmag2 = (v_m ** 2).sum(axis=2) + params.delta ** 2
        g1 = (params.s - 2.0) * vmag2 ** ((params.s - 4.0) / 2.0)
        g2 = vmag2 ** ((params.s - 2.0) / 2.0)
        lengths = spaces.bedge_lengths[bed]
        ebl = np.zeros((bed.size, 3, 2, 3, 2))
        for im in range(q.edge_points.shape[0]):
            lw = q.edge_weights[im] * lengths * tau_m[:, im]
            tv = spaces.edge_trace_vals[im]
            NN = np.einsum("a,b->ab", tv, tv)
            ebl += np.einsum("k,ab,kc,kd->kacbd", lw * g1[:, im], NN,
                             v_m[:, im], v_m[:, im])
            ebl += np.einsum("k,ab,cd->kacbd", lw * g2[:, im], NN, eye2)
        data.append(ebl.reshape(bed.size, 6, 6).ravel())
        indices.append(_bed_scatter(spaces))
    return data, indices


def _saddle_matrix(spaces, data, indices):
    rows = np.concatenate([r for r, _ in indices])
    cols = np.concatenate([c for _, c in indices])
    K = sp.coo_matrix((np.concatenate(data), (rows, cols)),
                      shape=(spaces.n_u, spaces.n_u)).tocsr()
    C = coupling_matrix(spaces)
    return sp.bmat([[K, C], [C.T, None]], format="csr")


def assemble_jacobian(velocity, rheology, friction, params):
    """Derivative of the residual at the given state, as a symmetric
    saddle-point :class:`AssembledSystem`.

    The velocity block pairs the derivative kernels with symmetric test
    gradients; the coupling block and its transpose are shared exactly.
    Requires delta > 0.
    """
    spaces = _check_args(velocity, rheology, friction)
    data, indices = _jacobian_velocity_block(spaces, velocity, rheology,
                                             friction, params)
    matrix = _saddle_matrix(spaces, data, indices)
    return AssembledSystem(matrix, np.zeros(spaces.n_sys),
                           np.flatnonzero(spaces.sys_constrained), spaces)


def assemble_adjoint_operator(velocity, rheology, friction, params):
    """Operator of the dual (adjoint) problem at the given state.

    Assembled independently of :func:`assemble_jacobian` by building the
    derivative-kernel image of each trial function and contracting it
    with the full (unsymmetrized) test gradient; since the image is a
    symmetric matrix the result equals the Jacobian entrywise up to
    rounding, and tests assert that equality.
    """
    spaces = _check_args(velocity, rheology, friction)
    if params.delta <= 0.0:
        raise ValueError("adjoint operator needs delta > 0, got %r" % (params.delta,))
    q = spaces.quadrature
    nt = spaces.mesh.num_triangles
    _, strain, mag2 = _strain_state(spaces, velocity, params)
    B_q = scalar_values_at_quadrature(rheology)
    c1 = (params.p - 2.0) * mag2 ** ((params.p - 4.0) / 2.0)
    c2 = mag2 ** ((params.p - 2.0) / 2.0)
    eye2 = np.eye(2)

    blocks = np.zeros((nt, 6, 2, 6, 2))
    for iq in range(q.tri_points.shape[0]):
        detw = q.tri_weights[iq] * spaces.det
        G = spaces.phys_grads[:, iq]
        GG = np.einsum("tad,tbd->tab", G, G)
        # symmetric gradient of trial (b, d): 0.5 (e_d x G_b + G_b x e_d)
        T = 0.5 * (np.einsum("di,tbj->tbdij", eye2, G)
                   + np.einsum("tbi,dj->tbdij", G, eye2))
        DvT = np.einsum("tij,tbdij->tbd", strain[:, iq], T)
        M = np.einsum("t,tbd,tij->tbdij", c1[:, iq], DvT, strain[:, iq]) \
            + np.einsum("t,tbdij->tbdij", c2[:, iq], T)
        # contract with the full test gradient e_c x G_a
        blocks += np.einsum("t,tbdcj,taj->tacbd", detw * B_q[:, iq], M, G)
        blocks += np.einsum("t,tab,cd->tacbd", detw * params.mu0, GG, eye2)
    data = [blocks.reshape(nt, 12, 12).ravel()]
    indices = [_vel_scatter(spaces)]

    bed = spaces.basal_edge_indices
    if bed.size:
        v_m = velocity_trace(velocity, bed)
        tau_m = basal_coeff_on_edges(friction)
        vmag2 = (v_m ** 2).sum(axis=2) + params.delta ** 2
        g1 = (params.s - 2.0) * vmag2 ** ((params.s - 4.0) / 2.0)
        g2 = vmag2 ** ((params.s - 2.0) / 2.0)
        lengths = spaces.bedge_lengths[bed]
        ebl = np.zeros((bed.size, 3, 2, 3, 2))
        for im in range(q.edge_points.shape[0]):
            lw = q.edge_weights[im] * lengths * tau_m[:, im]
            tv = spaces.edge_trace_vals[im]
            # image of trial (b, d) under the vector derivative kernel
            U = np.einsum("b,k,kd,kc->kbdc", tv, g1[:, im], v_m[:, im], v_m[:, im]) \
                + np.einsum("b,k,dc->kbdc", tv, g2[:, im], eye2)
            ebl += np.einsum("k,a,kbdc->kacbd", lw, tv, U)
        data.append(ebl.reshape(bed.size, 6, 6).ravel())
        indices.append(_bed_scatter(spaces))
    matrix = _saddle_matrix(spaces, data, indices)
    return AssembledSystem(matrix, np.zeros(spaces.n_sys),
                           np.flatnonzero(spaces.sys_constrained), spaces)


def assemble_coeff_derivative(velocity, rheology_dir, friction_dir, params):
    """Dual vector of the operator derivative with respect to the
    coefficients, in directions (rheology_dir, friction_dir).

    Velocity-test entries are (Btilde S(Dv), grad phi) plus the bed term
    (tautilde S(v), phi); pressure-test entries are zero.  Linear in the
    directions.
    """
    spaces = _require_spaces(velocity, SpaceKind.VELOCITY_P2_VEC)
    if rheology_dir.space.kind is not SpaceKind.COEFF_OMEGA_P1:
        raise ValueError("rheology direction must live on the vertex space")
    if friction_dir.space.kind is not SpaceKind.COEFF_BASAL_P1:
        raise ValueError("friction direction must live on the bed chain")
    q = spaces.quadrature
    nt = spaces.mesh.num_triangles
    _, strain, _ = _strain_state(spaces, velocity, params)
    S = s_omega(strain, params)
    Bt_q = scalar_values_at_quadrature(rheology_dir)

    out = np.zeros(spaces.n_sys)
    r_u = np.zeros((nt, 6, 2))
    for iq in range(q.tri_points.shape[0]):
        detw = q.tri_weights[iq] * spaces.det
        G = spaces.phys_grads[:, iq]
        r_u += np.einsum("t,tcj,taj->tac", detw * Bt_q[:, iq], S[:, iq], G)
    np.add.at(out, spaces.tri_vel_dofs.ravel(), r_u.reshape(nt, 12).ravel())

    bed = spaces.basal_edge_indices
    if bed.size:
        v_m = velocity_trace(velocity, bed)
        taut_m = basal_coeff_on_edges(friction_dir)
        Sg = s_gamma(v_m, params)
        nodes = spaces.bedge_nodes[bed]
        dofs = (2 * nodes[:, :, None] + np.arange(2)).reshape(-1, 6)
        lengths = spaces.bedge_lengths[bed]
        r_e = np.zeros((bed.size, 3, 2))
        for im in range(q.edge_points.shape[0]):
            lw = q.edge_weights[im] * lengths
            r_e += np.einsum("k,kc,a->kac", lw * taut_m[:, im], Sg[:, im],
                             spaces.edge_trace_vals[im])
        np.add.at(out, dofs.ravel(), r_e.reshape(-1, 6).ravel())
    return spaces.project_dual(out)


def operator_action(velocity, rheology, friction, params):
    """Raw velocity-space dual of the nonlinear operator (power-law,
    linear-viscosity and bed terms; no load, no pressure).

    Pairing with another velocity field's dof vector equals the
    corresponding integrals; used by monotonicity and energy checks.
    """
    spaces = _check_args(velocity, rheology, friction)
    q = spaces.quadrature
    nt = spaces.mesh.num_triangles
    grad, strain, _ = _strain_state(spaces, velocity, params)
    S = s_omega(strain, params)
    B_q = scalar_values_at_quadrature(rheology)

    out = np.zeros(spaces.n_u)
    r_u = np.zeros((nt, 6, 2))
    for iq in range(q.tri_points.shape[0]):
        detw = q.tri_weights[iq] * spaces.det
        G = spaces.phys_grads[:, iq]
        r_u += np.einsum("t,tcj,taj->tac", detw * B_q[:, iq], S[:, iq], G)
        r_u += params.mu0 * np.einsum("t,tcj,taj->tac", detw, grad[:, iq], G)
    np.add.at(out, spaces.tri_vel_dofs.ravel(), r_u.reshape(nt, 12).ravel())

    bed = spaces.basal_edge_indices
    if bed.size:
        v_m = velocity_trace(velocity, bed)
        tau_m = basal_coeff_on_edges(friction)
        Sg = s_gamma(v_m, params)
        nodes = spaces.bedge_nodes[bed]
        dofs = (2 * nodes[:, :, None] + np.arange(2)).reshape(-1, 6)
        lengths = spaces.bedge_lengths[bed]
        r_e = np.zeros((bed.size, 3, 2))
        for im in range(q.edge_points.shape[0]):
            lw = q.edge_weights[im] * lengths
            r_e += np.einsum("k,kc,a->kac", lw * tau_m[:, im], Sg[:, im],
                             spaces.edge_trace_vals[im])
        np.add.at(out, dofs.ravel(), r_e.reshape(-1, 6).ravel())
    return out


def assemble_coeff_gradient_duals(velocity, adjoint, params):
    """Dual vectors of the cost gradient's data terms on the coefficient
    spaces: per vertex basis N_k the integral of N_k S(Dv) : grad(lambda)
    and per bed basis N_m the integral of N_m S(v) . lambda."""
    spaces = _require_spaces(velocity, SpaceKind.VELOCITY_P2_VEC)
    q = spaces.quadrature
    _, strain, _ = _strain_state(spaces, velocity, params)
    S = s_omega(strain, params)
    grad_l = velocity_gradients_at_quadrature(adjoint)

    g_rheo = np.zeros(spaces.mesh.num_vertices)
    inner = (S * grad_l).sum(axis=(2, 3))                       # (nt, nq)
    for iq in range(q.tri_points.shape[0]):
        detw = q.tri_weights[iq] * spaces.det
        loc = np.einsum("t,k->tk", detw * inner[:, iq], spaces.p1_vals[iq])
        np.add.at(g_rheo, spaces.mesh.triangles.ravel(), loc.ravel())

    g_fric = np.zeros(spaces.coeff_basal.dof_count)
    bed = spaces.basal_edge_indices
    if bed.size:
        v_m = velocity_trace(velocity, bed)
        l_m = velocity_trace(adjoint, bed)
        Sg = s_gamma(v_m, params)
        pair = (Sg * l_m).sum(axis=2)                           # (k, m)
        lengths = spaces.bedge_lengths[bed]
        s = q.edge_points
        shape_fns = np.stack([1.0 - s, s], axis=1)              # (m, 2)
        loc = np.zeros((bed.size, 2))
        for im in range(s.size):
            lw = q.edge_weights[im] * lengths
            loc += np.einsum("k,a->ka", lw * pair[:, im], shape_fns[im])
        np.add.at(g_fric, spaces.basal_edge_dofs.ravel(), loc.ravel())
    return g_rheo, g_fric


# -- auxiliary matrices ------------------------------------------------


def _cached_matrix(spaces, key, builder):
    if key not in spaces._cache:
        spaces._cache[key] = builder()
    return spaces._cache[key]


def omega_p1_stiffness(spaces):
    """Gradient-seminorm stiffness of the vertex scalar space."""
    def build():
        areas = 0.5 * spaces.det
        blocks = np.einsum("t,tki,tli->tkl", areas, spaces.p1_grads, spaces.p1_grads)
        tris = spaces.mesh.triangles
        rows = np.repeat(tris[:, :, None], 3, axis=2).ravel()
        cols = np.repeat(tris[:, None, :], 3, axis=1).ravel()
        n = spaces.mesh.num_vertices
        return sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return _cached_matrix(spaces, "omega_stiffness", build)


def omega_p1_mass(spaces):
    """Consistent mass matrix of the vertex scalar space."""
    def build():
        local = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
        areas = 0.5 * spaces.det
        blocks = areas[:, None, None] * local
        tris = spaces.mesh.triangles
        rows = np.repeat(tris[:, :, None], 3, axis=2).ravel()
        cols = np.repeat(tris[:, None, :], 3, axis=1).ravel()
        n = spaces.mesh.num_vertices
        return sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return _cached_matrix(spaces, "omega_mass", build)


def basal_p1_stiffness(spaces):
    """Arc-length gradient stiffness along the bed chain."""
    def build():
        lengths = spaces.bedge_lengths[spaces.basal_edge_indices]
        local = np.array([[1.0, -1.0], [-1.0, 1.0]])
        blocks = local[None, :, :] / lengths[:, None, None]
        dofs = spaces.basal_edge_dofs
        rows = np.repeat(dofs[:, :, None], 2, axis=2).ravel()
        cols = np.repeat(dofs[:, None, :], 2, axis=1).ravel()
        n = spaces.coeff_basal.dof_count
        return sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return _cached_matrix(spaces, "basal_stiffness", build)


def basal_p1_mass(spaces):
    """Arc-length mass matrix along the bed chain."""
    def build():
        lengths = spaces.bedge_lengths[spaces.basal_edge_indices]
        local = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
        blocks = lengths[:, None, None] * local[None, :, :]
        dofs = spaces.basal_edge_dofs
        rows = np.repeat(dofs[:, :, None], 2, axis=2).ravel()
        cols = np.repeat(dofs[:, None, :], 2, axis=1).ravel()
        n = spaces.coeff_basal.dof_count
        return sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return _cached_matrix(spaces, "basal_mass", build)


def velocity_v2_stiffness(spaces):
    """Full-gradient stiffness of the velocity space (both components)."""
    def build():
        q = spaces.quadrature
        nt = spaces.mesh.num_triangles
        eye2 = np.eye(2)
        blocks = np.zeros((nt, 6, 2, 6, 2))
        for iq in range(q.tri_points.shape[0]):
            detw = q.tri_weights[iq] * spaces.det
            G = spaces.phys_grads[:, iq]
            GG = np.einsum("tad,tbd->tab", G, G)
            blocks += np.einsum("t,tab,cd->tacbd", detw, GG, eye2)
        rows, cols = _vel_scatter(spaces)
        return sp.coo_matrix((blocks.reshape(nt, 12, 12).ravel(), (rows, cols)),
                             shape=(spaces.n_u, spaces.n_u)).tocsr()
    return _cached_matrix(spaces, "velocity_v2", build)


def velocity_mass(spaces):
    """L2 mass matrix of the velocity space."""
    def build():
        q = spaces.quadrature
        nt = spaces.mesh.num_triangles
        eye2 = np.eye(2)
        blocks = np.zeros((nt, 6, 2, 6, 2))
        for iq in range(q.tri_points.shape[0]):
            detw = q.tri_weights[iq] * spaces.det
            N = spaces.p2_vals[iq]
            blocks += np.einsum("t,a,b,cd->tacbd", detw, N, N, eye2)
        rows, cols = _vel_scatter(spaces)
        return sp.coo_matrix((blocks.reshape(nt, 12, 12).ravel(), (rows, cols)),
                             shape=(spaces.n_u, spaces.n_u)).tocsr()
    return _cached_matrix(spaces, "velocity_mass", build)


def basal_trace_mass(spaces):
    """L2 mass of velocity traces on the bed chain."""
    def build():
        q = spaces.quadrature
        bed = spaces.basal_edge_indices
        eye2 = np.eye(2)
        ebl = np.zeros((bed.size, 3, 2, 3, 2))
        lengths = spaces.bedge_lengths[bed]
        for im in range(q.edge_points.shape[0]):
            lw = q.edge_weights[im] * lengths
            tv = spaces.edge_trace_vals[im]
            ebl += np.einsum("k,a,b,cd->kacbd", lw, tv, tv, eye2)
        rows, cols = _bed_scatter(spaces)
        return sp.coo_matrix((ebl.reshape(bed.size, 6, 6).ravel(), (rows, cols)),
                             shape=(spaces.n_u, spaces.n_u)).tocsr()
    return _cached_matrix(spaces, "basal_trace_mass", build)


def dump_matrix_market(system, path):
    """Write the full operator in Matrix Market coordinate format."""
    mmwrite(str(path), system.matrix)
