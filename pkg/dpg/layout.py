"""
DOF layout module for the grad-div DPG solver.
Contains DofLayout (global numbering of fields and traces with essential
boundary records) and SolutionVector (global coefficients with evaluation helpers).
"""

from dataclasses import dataclass, field

import numpy as np

from basis.basis import CONTINUOUS, TraceDofMap
from forms.elements import ElementBatch


@dataclass(frozen=True)
class EssentialRecord:
    """Boundary DOFs of one trace variable constrained by condition `kind` ("normal" or "div")."""

    trace: str
    kind: str
    dofs: np.ndarray


class DofLayout:
    """
    Global numbering of the trial space of a formulation on a mesh.

    Field DOFs come first, element by element (all fields of triangle 0,
    then triangle 1, ...). Trace variables follow in declaration order, each
    numbered by its TraceDofMap.

    Attributes:
        mesh (Mesh): Triangulation.
        formulation (Formulation): Ultraweak form.
        trace_maps (dict): Trace name -> TraceDofMap.
        element_dofs (np.ndarray): Global index of every local trial column,
            shape (nt, local_trial_size).
        essential (tuple): EssentialRecord per constrained trace.
        n_dofs (int): Total number of DOFs.
    """

    def __init__(self, mesh, formulation):
        self.mesh = mesh
        self.formulation = formulation

        fs = formulation.field_size
        field_dofs = (np.arange(mesh.n_triangles)[:, None] * fs + np.arange(fs)).astype(np.int64)
        offset = mesh.n_triangles * fs
        self.n_field_dofs = offset

        self.trace_maps = {}
        columns = [field_dofs]
        for trace in formulation.traces:
            tmap = TraceDofMap(mesh, trace.kind, trace.degree, offset=offset)
            self.trace_maps[trace.name] = tmap
            columns.append(tmap.element_dofs)
            offset += tmap.n_dofs
        self.n_dofs = offset
        self.element_dofs = np.hstack(columns)

        self.essential = tuple(
            EssentialRecord(trace=t.name, kind=t.boundary, dofs=self.trace_maps[t.name].boundary_dofs())
            for t in formulation.traces if t.boundary is not None)

    def essential_dofs(self):
        """Sorted indices of all constrained DOFs."""
        if not self.essential:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate([r.dofs for r in self.essential]))

    def free_dofs(self):
        """Sorted indices of all unconstrained DOFs; their count is dim(U_h)."""
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.essential_dofs()] = False
        return np.flatnonzero(mask)

    @property
    def dimension(self):
        return self.n_dofs - self.essential_dofs().size

    def dof_names(self):
        """Variable name of every global DOF."""
        names = np.empty(self.n_dofs, dtype=object)
        for name, cols in self.formulation.field_slices().items():
            names[self.element_dofs[:, cols].ravel()] = name
        for name, tmap in self.trace_maps.items():
            names[tmap.offset:tmap.offset + tmap.n_dofs] = name
        return names


@dataclass
class SolutionVector:
    """
    Global coefficient vector of a discrete solution.

    Attributes:
        layout (DofLayout): Numbering the coefficients refer to.
        coefficients (np.ndarray): Shape (n_dofs,).
        local_residuals (list): Per element chunk (elements, Y, z) with
            Y = L^{-1} B_T and z = L^{-1} l_T for the Gram factor L; kept for
            the residual estimator.
        residual (float): Relative residual of the solved linear system.
    """

    layout: DofLayout
    coefficients: np.ndarray
    local_residuals: list = field(default=None, repr=False)
    residual: float = 0.0

    @property
    def mesh(self):
        return self.layout.mesh

    def local(self, elements=None):
        """Local trial coefficients, shape (m, local_trial_size)."""
        dofs = self.layout.element_dofs if elements is None else self.layout.element_dofs[elements]
        return self.coefficients[dofs]

    def field_coefficients(self, elements=None):
        """Local field block of each element, shape (m, field_size)."""
        return self.local(elements)[:, :self.layout.formulation.field_size]

    def trace_coefficients(self, name):
        """Global coefficients of one trace variable."""
        tmap = self.layout.trace_maps[name]
        return self.coefficients[tmap.offset:tmap.offset + tmap.n_dofs]

    def evaluate_fields(self, batch, points=None):
        """Discrete field values on a batch, see Formulation.field_values."""
        return self.layout.formulation.field_values(
            batch, self.field_coefficients(batch.elements), points=points)

    def centroid_values(self):
        """Field values at the centroid of every triangle (name -> (nt,) or (nt, 2))."""
        mesh = self.mesh
        batch = ElementBatch(mesh, np.arange(mesh.n_triangles), 0)
        values = self.evaluate_fields(batch, points=mesh.centroids[:, None, :])
        return {name: v[:, 0] for name, v in values.items()}

    def vertex_values(self):
        """Vertex DOFs of every continuous trace (name -> (nv,))."""
        nv = self.mesh.n_vertices
        return {name: self.trace_coefficients(name)[:nv]
                for name, tmap in self.layout.trace_maps.items() if tmap.kind == CONTINUOUS}
