"""
First-order ultraweak form for the grad-div DPG solver.
Contains FirstOrderFormulation for the system

    div u1 = u2, grad u2 = u3, div u3 = u4, u1 + grad u4 = f,

with bilinear form

    b(u, v) = (u1, v1 - grad v4) - (u2, v4 + div v3) - (u3, v3 + grad v2)
              - (u4, v2 + div v1) + <u1^, v4> + <u2^, v3> + <u3^, v2> + <u4^, v1>

and load L(v) = (f, v1).
"""

import numpy as np

from basis.basis import CONTINUOUS, FLUX, vector_divergence, vector_values
from config import MAX_FIRST_ORDER_DEGREE, SCALAR_TEST_OFFSET, VECTOR_TEST_OFFSET
from forms.elements import FieldSpec, Formulation, TraceSpec


class FirstOrderFormulation(Formulation):
    """
    Ultraweak form of the first-order system.

    Trial: u1, u3 in P^p(T)^2, u2, u4 in P^p(T); flux traces u1^, u3^ of
    degree p; continuous traces u2^, u4^ of degree p + 1. u1^ and u2^ carry
    the boundary conditions u . n = g and div u = g.
    Test: v1, v3 in P^{p+2}(T)^2 with the H(div) norm, v2, v4 in P^{p+3}(T)
    with the H^1 norm.
    """

    name = "first"
    max_degree = MAX_FIRST_ORDER_DEGREE
    error_fields = ("u1", "u3")

    def __init__(self, degree=0):
        super().__init__(degree)
        p = degree
        self.vector_degree = p + VECTOR_TEST_OFFSET
        self.scalar_degree = p + SCALAR_TEST_OFFSET
        self.fields = (FieldSpec("u1", 2), FieldSpec("u2", 1), FieldSpec("u3", 2), FieldSpec("u4", 1))
        self.traces = (
            TraceSpec("hat_u1", FLUX, p, boundary="normal"),
            TraceSpec("hat_u2", CONTINUOUS, p + 1, boundary="div"),
            TraceSpec("hat_u3", FLUX, p),
            TraceSpec("hat_u4", CONTINUOUS, p + 1),
        )
        self.test_blocks = (
            ("v1", 2, self.vector_degree),
            ("v2", 1, self.scalar_degree),
            ("v3", 2, self.vector_degree),
            ("v4", 1, self.scalar_degree),
        )

    def exact_fields(self, problem):
        return {"u1": problem.u, "u2": problem.div_u, "u3": problem.grad_div_u,
                "u4": problem.div_grad_div_u}

    def exact_traces(self, problem):
        return {"hat_u1": problem.u, "hat_u2": problem.div_u, "hat_u3": problem.grad_div_u,
                "hat_u4": problem.div_grad_div_u}

    def local_gram(self, batch):
        """
        Gram matrices of the broken test norm
        |v1|_div^2 + |v2|_1^2 + |v3|_div^2 + |v4|_1^2.

        Args:
            batch (ElementBatch): Elements.

        Returns:
            np.ndarray: SPD matrices, shape (m, 44, 44) for p = 0.
        """
        vals, grads = batch.volume_eval(self.vector_degree)
        v = vector_values(vals)
        div_v = vector_divergence(grads)
        hdiv = batch.integrate_vector(v, v) + batch.integrate(div_v, div_v)

        vals, grads = batch.volume_eval(self.scalar_degree)
        h1 = batch.integrate(vals, vals) + batch.integrate_vector(grads, grads)

        return self.assemble_gram({"v1": hdiv, "v2": h1, "v3": hdiv, "v4": h1}, batch)

    def local_b(self, batch):
        """
        Trial-test matrices of the first-order form.

        Args:
            batch (ElementBatch): Elements.

        Returns:
            np.ndarray: Shape (m, test_size, local_trial_size).
        """
        rows = self.test_slices()
        cols = {**self.field_slices(), **self.trace_slices()}
        b = np.zeros((batch.size, self.test_size, self.local_trial_size))

        phi, _ = batch.volume_eval(self.degree)
        phi_vec = vector_values(phi)

        vals, grads = batch.volume_eval(self.vector_degree)
        v = vector_values(vals)
        div_v = vector_divergence(grads)
        s_vals, s_grads = batch.volume_eval(self.scalar_degree)

        b[:, rows["v1"], cols["u1"]] = batch.integrate_vector(v, phi_vec)
        b[:, rows["v4"], cols["u1"]] = -batch.integrate_vector(s_grads, phi_vec)
        b[:, rows["v4"], cols["u2"]] = -batch.integrate(s_vals, phi)
        b[:, rows["v3"], cols["u2"]] = -batch.integrate(div_v, phi)
        b[:, rows["v3"], cols["u3"]] = -batch.integrate_vector(v, phi_vec)
        b[:, rows["v2"], cols["u3"]] = -batch.integrate_vector(s_grads, phi_vec)
        b[:, rows["v2"], cols["u4"]] = -batch.integrate(s_vals, phi)
        b[:, rows["v1"], cols["u4"]] = -batch.integrate(div_v, phi)

        traces = self.trace_columns(batch)
        e_vals, _ = batch.edge_eval(self.vector_degree)
        v_normal = batch.edge_normal_component(vector_values(e_vals))
        s_edge, _ = batch.edge_eval(self.scalar_degree)

        b[:, rows["v4"], cols["hat_u1"]] = batch.flux_pairing(s_edge, traces["hat_u1"])
        b[:, rows["v3"], cols["hat_u2"]] = batch.continuous_pairing(v_normal, traces["hat_u2"])
        b[:, rows["v2"], cols["hat_u3"]] = batch.flux_pairing(s_edge, traces["hat_u3"])
        b[:, rows["v1"], cols["hat_u4"]] = batch.continuous_pairing(v_normal, traces["hat_u4"])
        return b

    def local_load(self, batch, f):
        """
        Load vectors L(v) = (f, v1).

        Args:
            batch (ElementBatch): Elements.
            f (callable): Right-hand side, points (..., 2) -> values (..., 2).

        Returns:
            np.ndarray: Shape (m, test_size); only the v1 block is nonzero.
        """
        load = np.zeros((batch.size, self.test_size))
        vals, _ = batch.volume_eval(self.vector_degree)
        load[:, self.test_slices()["v1"]] = batch.moments(vector_values(vals), f(batch.points))
        return load


def local_gram_first(batch, degree=0):
    return FirstOrderFormulation(degree).local_gram(batch)


def local_b_first(batch, degree=0):
    return FirstOrderFormulation(degree).local_b(batch)


def local_load_first(batch, f, degree=0):
    return FirstOrderFormulation(degree).local_load(batch, f)
