"""Online nonlinear prediction on a trained network.

A load increment is iterated until the leaf strain increments stop
changing. In each pass the active leaves evaluate their laws and report a
tangent and a residual strain ``d_eps - D d_sig``. The upsweep homogenizes
both block by block. At the root, ``d_eps = C^-1 d_sig + d_res`` is solved
under the mixed control of the program, and the downsweep splits the macro
increment back onto the leaves with the laminate conditions of each block.

With consistent tangents this is Newton's method on the leaf strains, so
linear leaves converge after one correction. When the convergence metric
stalls the update is relaxed (see ``OnlinePredictor``).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .block import COND_LIMIT, IN_PLANE, NORMAL, _pair_forward, inv3
from .errors import NoConvergence, SingularInPlaneBlock, SingularInterfaceBlock, SingularRootSystem
from .mandel import rotation_matrix
from .materials import MaterialMap, MaterialState
from .network import DmnParams, PrunedTree
from .program import LoadingProgram, LoadStep, MacroResponse, increment_targets


@dataclass
class LeafState:
    """Iteration data of one active leaf."""

    state: MaterialState = field(default_factory=MaterialState)
    d_eps: np.ndarray = field(default_factory=lambda: np.zeros(6))
    d_sig: np.ndarray = field(default_factory=lambda: np.zeros(6))
    residual: np.ndarray = field(default_factory=lambda: np.zeros(6))
    tangent: np.ndarray = field(default_factory=lambda: np.eye(6))
    compliance: np.ndarray = field(default_factory=lambda: np.eye(6))
    trial: MaterialState | None = None


def leaf_residual(d_eps, d_sig, compliance) -> np.ndarray:
    """Residual strain ``d_eps - D @ d_sig`` of one leaf."""
    return np.asarray(d_eps, float) - np.asarray(compliance, float) @ np.asarray(d_sig, float)


def homogenize_residual(de1, de2, D1, D2, f1: float, f2: float) -> np.ndarray:
    """Residual strain of a block from the residuals and compliances of its children."""
    de1, de2 = np.asarray(de1, float), np.asarray(de2, float)
    D1, D2 = np.asarray(D1, float), np.asarray(D2, float)
    M = (f1 * D2 + f2 * D1)[np.ix_(IN_PLANE, IN_PLANE)]
    M_inv, _ = inv3(M)
    if not np.linalg.norm(M) * np.linalg.norm(M_inv) < COND_LIMIT:
        raise SingularInPlaneBlock("in-plane compliance block is singular")
    jump = (de2 - de1)[IN_PLANE]
    return f1 * de1 + f2 * de2 + f1 * f2 * (D1 - D2)[:, IN_PLANE] @ (M_inv @ jump)


def solve_root(C, d_res, targets, strain_mask):
    """Solve ``d_eps = C^-1 d_sig + d_res`` with mixed control.

    ``targets`` holds the prescribed increments: strain components where
    ``strain_mask`` is True, stress components elsewhere.

    Returns
    -------
    d_eps, d_sig : numpy.ndarray
    """
    C, d_res, targets = np.asarray(C, float), np.asarray(d_res, float), np.asarray(targets, float)
    E = np.asarray(strain_mask, bool)
    S = ~E
    d_eps = np.where(E, targets, 0.0)
    if np.any(S):
        C_ss = C[np.ix_(S, S)]
        try:
            cond = np.linalg.cond(C_ss)
        except np.linalg.LinAlgError:
            cond = np.inf
        if not cond < COND_LIMIT:
            raise SingularRootSystem("stress-controlled block of the root tangent is singular")
        rhs = targets[S] - C[np.ix_(S, E)] @ (d_eps[E] - d_res[E])
        d_eps[S] = d_res[S] + np.linalg.solve(C_ss, rhs)
    d_sig = C @ (d_eps - d_res)
    d_sig[S] = targets[S]
    return d_eps, d_sig


@dataclass
class _NodeData:
    C: np.ndarray = None        # output-frame tangent
    D: np.ndarray = None        # output-frame compliance
    res: np.ndarray = None      # output-frame residual
    C_loc: np.ndarray = None    # local-frame homogenized tangent
    res_loc: np.ndarray = None


@dataclass(frozen=True)
class BlockRecord:
    """Local-frame increments of one block at a converged iteration."""

    address: tuple
    f1: float
    f2: float
    d_eps: np.ndarray
    d_sig: np.ndarray
    d_eps1: np.ndarray
    d_sig1: np.ndarray
    d_eps2: np.ndarray
    d_sig2: np.ndarray


def _rotations(tree: PrunedTree):
    return {i: rotation_matrix(*n.angles) for i, n in enumerate(tree.nodes) if not n.is_leaf}


def upsweep(tree: PrunedTree, leaves: dict, rotations=None):
    """Homogenize leaf tangents and residual strains up to the root.

    Parameters
    ----------
    tree : PrunedTree
    leaves : dict[int, LeafState]
        Keyed by 0-based leaf position.

    Returns
    -------
    C_dmn, d_res : numpy.ndarray
        Root tangent and root residual strain.
    data : list
        Per-node cache consumed by :func:`downsweep`.
    """
    rotations = _rotations(tree) if rotations is None else rotations
    data = [None] * len(tree.nodes)
    for i, node in enumerate(tree.nodes):
        if node.is_leaf:
            ls = leaves[node.leaf]
            data[i] = _NodeData(ls.tangent, ls.compliance, ls.residual)
            continue
        if len(node.children) == 2:
            a, b = data[node.children[0]], data[node.children[1]]
            C, _, cond = _pair_forward(a.C, b.C, node.f1, node.f2)
            if not cond < COND_LIMIT:
                raise SingularInterfaceBlock("interface block is singular", address=node.address)
            try:
                res = homogenize_residual(a.res, b.res, a.D, b.D, node.f1, node.f2)
            except SingularInPlaneBlock as exc:
                raise SingularInPlaneBlock(str(exc), address=node.address) from None
        else:
            only = data[node.children[0]]
            C, res = only.C, only.res
        R = rotations[i]
        C_out = R.T @ C @ R
        C_out = 0.5 * (C_out + C_out.T)
        data[i] = _NodeData(C_out, np.linalg.inv(C_out), R.T @ res, C, res)
    root = data[tree.root]
    return root.C, root.res, data


def split_block(d_eps, C1, C2, res1, res2, f1, f2):
    """Distribute a local-frame strain increment onto the two children.

    Enforces ``f1 e1 + f2 e2 = d_eps``, equal in-plane components (1, 2, 6)
    and equal normal tractions ``[C_a (e_a - res_a)]_{3,4,5}``.
    """
    C_hat = f2 * C1 + f1 * C2
    rhs = (C2 @ d_eps)[NORMAL] - C_hat[NORMAL, IN_PLANE] @ d_eps[IN_PLANE] \
        + f2 * (C1 @ res1 - C2 @ res2)[NORMAL]
    A = C_hat[NORMAL, NORMAL]
    A_inv, _ = inv3(A)
    if not np.linalg.norm(A) * np.linalg.norm(A_inv) < COND_LIMIT:
        raise SingularInterfaceBlock("interface block is singular")
    e1 = d_eps.copy()
    e1[NORMAL] = A_inv @ rhs
    e2 = (d_eps - f1 * e1) / f2
    return e1, e2


def downsweep(tree: PrunedTree, data, d_eps_macro, rotations=None, records=None) -> dict:
    """Propagate the root strain increment down to the active leaves.

    Returns a dict of new leaf strain increments keyed by 0-based leaf
    position. If ``records`` is a list, one :class:`BlockRecord` per
    two-child block is appended.
    """
    rotations = _rotations(tree) if rotations is None else rotations
    incoming = {tree.root: np.asarray(d_eps_macro, float)}
    out = {}
    for i in range(len(tree.nodes) - 1, -1, -1):
        node = tree.nodes[i]
        d_out = incoming.pop(i)
        if node.is_leaf:
            out[node.leaf] = d_out
            continue
        d_loc = rotations[i] @ d_out
        if len(node.children) == 1:
            incoming[node.children[0]] = d_loc
            continue
        ia, ib = node.children
        a, b = data[ia], data[ib]
        try:
            e1, e2 = split_block(d_loc, a.C, b.C, a.res, b.res, node.f1, node.f2)
        except SingularInterfaceBlock as exc:
            raise SingularInterfaceBlock(str(exc), address=node.address) from None
        incoming[ia], incoming[ib] = e1, e2
        if records is not None:
            nd = data[i]
            records.append(BlockRecord(
                node.address, node.f1, node.f2, d_loc, nd.C_loc @ (d_loc - nd.res_loc),
                e1, a.C @ (e1 - a.res), e2, b.C @ (e2 - b.res)))
    return out


class OnlinePredictor:
    """Stateful online solver for one network and one set of leaf laws.

    Parameters
    ----------
    params : DmnParams
    materials : MaterialMap
    tol : float
        Relative tolerance on the change of leaf strain increments.
    max_iter : int
    eps_floor : float
        Lower bound of the normalization in the convergence metric.
    min_relaxation : float
        Floor of the relaxation factor. The factor starts at 1 and is halved
        whenever the convergence metric fails to decrease; 1 disables it.
    record_blocks : bool
        Keep per-block increments of the last iteration of every increment
        (see :attr:`block_history`).
    """

    def __init__(self, params: DmnParams, materials: MaterialMap, tol=1e-8, max_iter=50,
                 eps_floor=1e-12, record_blocks=False, min_relaxation=1.0 / 16):
        self.params = params
        self.tree = params.pruned
        self.materials = materials
        self.tol, self.max_iter, self.eps_floor = tol, max_iter, eps_floor
        self.min_relaxation = min_relaxation
        self.rotations = _rotations(self.tree)
        leaf_w = params.weights.leaves
        total = float(np.sum(leaf_w))
        self.leaf_fraction = {j: float(leaf_w[j]) / total for j in self.tree.active_leaves}
        self.laws = {j: materials.for_leaf(j) for j in self.tree.active_leaves}
        self.leaves = {j: LeafState() for j in self.tree.active_leaves}
        self.eps = np.zeros(6)
        self.sig = np.zeros(6)
        self.record_blocks = record_blocks
        self.block_history = []
        self.C_dmn = None
        self.d_res = None

    def _evaluate_leaves(self, d_eps: dict):
        for j, ls in self.leaves.items():
            d_sig, tangent, trial = self.laws[j].update(d_eps[j], ls.state)
            ls.d_eps, ls.d_sig, ls.trial = d_eps[j], d_sig, trial
            ls.tangent = tangent
            ls.compliance = np.linalg.inv(tangent)
            ls.residual = leaf_residual(d_eps[j], d_sig, ls.compliance)

    def tangent(self) -> np.ndarray:
        """Macro tangent with all leaves evaluated at a zero increment."""
        self._evaluate_leaves({j: np.zeros(6) for j in self.leaves})
        C, _, _ = upsweep(self.tree, self.leaves, self.rotations)
        return C

    def run_increment(self, targets, strain_mask):
        """Solve one increment with prescribed control increments.

        Leaf states are committed only on convergence; on failure
        :class:`NoConvergence` is raised and the predictor is unchanged.

        Returns
        -------
        d_eps, d_sig : numpy.ndarray
            Macro increments.
        iterations : int
        change : float
            Final value of the convergence metric.
        """
        d_eps = {j: np.zeros(6) for j in self.leaves}
        change, omega = np.inf, 1.0
        for it in range(1, self.max_iter + 1):
            self._evaluate_leaves(d_eps)
            C, d_res, data = upsweep(self.tree, self.leaves, self.rotations)
            d_eps_macro, d_sig_macro = solve_root(C, d_res, targets, strain_mask)
            records = [] if self.record_blocks else None
            new = downsweep(self.tree, data, d_eps_macro, self.rotations, records)
            prev = change
            change = max(np.linalg.norm(new[j] - d_eps[j]) / max(np.linalg.norm(new[j]), self.eps_floor)
                         for j in new)
            if change < self.tol:
                d_eps = new
                break
            if change >= prev:
                # stalled or cycling between elastic and plastic branches: relax
                omega = max(0.5 * omega, self.min_relaxation)
            else:
                omega = min(2.0 * omega, 1.0)
            d_eps = {j: d_eps[j] + omega * (new[j] - d_eps[j]) for j in new}
        else:
            raise NoConvergence(f"no convergence after {self.max_iter} iterations "
                                f"(metric {change:.3e})", max_iter=self.max_iter)
        self._evaluate_leaves(d_eps)
        for ls in self.leaves.values():
            ls.state = ls.trial
        self.C_dmn, self.d_res = C, d_res
        if records is not None:
            self.block_history.append(records)
        return d_eps_macro, d_sig_macro, it, change

    def dissipation_increment(self, old_states: dict) -> float:
        """Weighted ``sigma . d_eps_p`` summed over leaves for the last increment."""
        total = 0.0
        for j, ls in self.leaves.items():
            total += self.leaf_fraction[j] * float(ls.state.sig @ (ls.state.eps_p - old_states[j].eps_p))
        return total

    def averaged_leaf_stress(self) -> np.ndarray:
        """Weighted leaf stresses mapped to the root frame through every block rotation."""
        return self._average(lambda ls: ls.state.sig)

    def _average(self, getter):
        acc = {}
        for i, node in enumerate(self.tree.nodes):
            if node.is_leaf:
                acc[i] = self.leaf_fraction[node.leaf] * getter(self.leaves[node.leaf])
            else:
                acc[i] = self.rotations[i].T @ sum(acc.pop(c) for c in node.children)
        return acc[self.tree.root]

    def step(self, step: LoadStep, frac_from: float, frac_to: float, eps_start, sig_start):
        """Advance from ``frac_from`` to ``frac_to`` of ``step``; returns iterations used."""
        target = increment_targets(step, frac_to, eps_start, sig_start)
        current = np.where(step.strain_mask, self.eps, self.sig)
        old = {j: ls.state for j, ls in self.leaves.items()}
        d_eps, d_sig, iters, change = self.run_increment(target - current, step.strain_mask)
        self.eps = self.eps + d_eps
        self.sig = self.sig + d_sig
        return iters, change, self.dissipation_increment(old)

    def run(self, program: LoadingProgram, bisections: int = 0) -> MacroResponse:
        """Apply a loading program and record one row per increment.

        ``bisections`` > 0 retries a failed increment split into 2, 4, ...
        sub-increments. On final failure the partial response is attached to
        the raised :class:`NoConvergence` as ``exc.response``.
        """
        out = MacroResponse()
        n_done = 0
        for step in program.steps:
            eps_start, sig_start = self.eps.copy(), self.sig.copy()
            for k in range(1, step.increments + 1):
                f0, f1 = (k - 1) / step.increments, k / step.increments
                try:
                    iters, change, diss = self._step_with_retry(step, f0, f1, eps_start, sig_start,
                                                                bisections)
                except NoConvergence as exc:
                    out.converged = False
                    exc.increment = n_done + 1
                    exc.response = out
                    raise
                n_done += 1
                p_max = max((ls.state.p_acc for ls in self.leaves.values()), default=0.0)
                out.append(self.eps, self.sig, iters, change, p_max, diss)
        return out

    def _step_with_retry(self, step, f0, f1, eps_start, sig_start, bisections):
        for level in range(bisections + 1):
            n_sub = 2 ** level
            saved = self._snapshot()
            try:
                iters, change, diss = 0, 0.0, 0.0
                for s in range(1, n_sub + 1):
                    fa = f0 + (f1 - f0) * (s - 1) / n_sub
                    fb = f0 + (f1 - f0) * s / n_sub
                    it, change, d = self.step(step, fa, fb, eps_start, sig_start)
                    iters += it
                    diss += d
                return iters, change, diss
            except NoConvergence:
                self._restore(saved)
                if level == bisections:
                    raise

    def _snapshot(self):
        return self.eps.copy(), self.sig.copy(), {j: ls.state for j, ls in self.leaves.items()}

    def _restore(self, snap):
        self.eps, self.sig, states = snap
        for j, st in states.items():
            self.leaves[j].state = st


def predict(params: DmnParams, materials: MaterialMap, program: LoadingProgram, tol=1e-8,
            max_iter=50, bisections=0) -> MacroResponse:
    """Convenience wrapper: fresh predictor, full program."""
    return OnlinePredictor(params, materials, tol, max_iter).run(program, bisections)
