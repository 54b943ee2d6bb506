"""
Second-order ultraweak form for the grad-div DPG solver.
Contains SecondOrderFormulation for the system u - grad div w = f,
w + grad div u = 0, with bilinear form

    b(u, v) = (u, v - grad div tau) - (w, tau + grad div v) + <u^, tau> + <w^, v>

and load L(v) = (f, v). A grad-div trace g^ = (g_n, g_div) acts on a test
field tau by <g^, tau> = sum_T int sigma g_n div tau - int g_div tau . n_T.
"""

import numpy as np

from basis.basis import CONTINUOUS, FLUX, vector_values
from config import GRADDIV_TEST_OFFSET, MAX_SECOND_ORDER_DEGREE
from forms.elements import FieldSpec, Formulation, TraceSpec


class SecondOrderFormulation(Formulation):
    """
    Ultraweak form of the second-order system.

    Trial: u, w in P^p(T)^2; each grad-div trace is a pair of a flux trace of
    degree p and a continuous trace of degree p + 1. The pair of u carries
    u . n = g and div u = g on the boundary.
    Test: v, tau in P^{p+3}(T)^2 with the norm |v|^2 + |grad div v|^2, in the
    grad-div orthonormal basis of every element.
    """

    name = "second"
    max_degree = MAX_SECOND_ORDER_DEGREE
    error_fields = ("u", "w")

    def __init__(self, degree=0):
        super().__init__(degree)
        p = degree
        self.vector_degree = p + GRADDIV_TEST_OFFSET
        self.fields = (FieldSpec("u", 2), FieldSpec("w", 2))
        self.traces = (
            TraceSpec("hat_u_n", FLUX, p, boundary="normal"),
            TraceSpec("hat_u_div", CONTINUOUS, p + 1, boundary="div"),
            TraceSpec("hat_w_n", FLUX, p),
            TraceSpec("hat_w_div", CONTINUOUS, p + 1),
        )
        self.test_blocks = (("v", 2, self.vector_degree), ("tau", 2, self.vector_degree))

    def exact_fields(self, problem):
        return {"u": problem.u, "w": lambda x: -problem.grad_div_u(x)}

    def exact_traces(self, problem):
        return {
            "hat_u_n": problem.u,
            "hat_u_div": problem.div_u,
            "hat_w_n": lambda x: -problem.grad_div_u(x),
            "hat_w_div": lambda x: -problem.div_grad_div_u(x),
        }

    def test_values(self, batch, components, degree):
        return batch.graddiv_volume_eval(degree)[0]

    def local_gram(self, batch):
        """
        Gram matrices of (v, dv) + (grad div v, grad div dv) for v and tau.

        The test basis is orthonormal in this inner product, so the matrices
        equal the identity up to quadrature rounding for any element size.

        Args:
            batch (ElementBatch): Elements.

        Returns:
            np.ndarray: SPD matrices, shape (m, 40, 40) for p = 0.
        """
        v, _, gd = batch.graddiv_volume_eval(self.vector_degree)
        block = batch.integrate_vector(v, v) + batch.integrate_vector(gd, gd)
        return self.assemble_gram({"v": block, "tau": block}, batch)

    def local_b(self, batch):
        """
        Trial-test matrices of the second-order form.

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
        v, _, gd = batch.graddiv_volume_eval(self.vector_degree)

        mass = batch.integrate_vector(v, phi_vec)
        coupling = batch.integrate_vector(gd, phi_vec)
        b[:, rows["v"], cols["u"]] = mass
        b[:, rows["v"], cols["w"]] = -coupling
        b[:, rows["tau"], cols["u"]] = -coupling
        b[:, rows["tau"], cols["w"]] = -mass

        traces = self.trace_columns(batch)
        e_vals, e_div, _ = batch.graddiv_edge_eval(self.vector_degree)
        e_normal = batch.edge_normal_component(e_vals)

        for test, flux, cont in (("tau", "hat_u_n", "hat_u_div"), ("v", "hat_w_n", "hat_w_div")):
            b[:, rows[test], cols[flux]] = batch.flux_pairing(e_div, traces[flux])
            b[:, rows[test], cols[cont]] = -batch.continuous_pairing(e_normal, traces[cont])
        return b

    def local_load(self, batch, f):
        """Load vectors L(v) = (f, v); the tau block stays zero."""
        load = np.zeros((batch.size, self.test_size))
        v, _, _ = batch.graddiv_volume_eval(self.vector_degree)
        load[:, self.test_slices()["v"]] = batch.moments(v, f(batch.points))
        return load


def local_gram_second(batch, degree=0):
    return SecondOrderFormulation(degree).local_gram(batch)


def local_b_second(batch, degree=0):
    return SecondOrderFormulation(degree).local_b(batch)


def local_load_second(batch, f, degree=0):
    return SecondOrderFormulation(degree).local_load(batch, f)
