# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pykernels``; same semantics and RNG consumption."""
import numpy as np
from libc.math cimport exp, log

cdef double RESCALE_GAP = 50.0

cdef int ENGINE_COX = 2
cdef int ENGINE_EXPONENTIAL = 1


cdef class _Accumulator:
    cdef const long[:] cls_u
    cdef const long[:] cls_v
    cdef const long[:] cls_res
    cdef const double[:] cls_logrho
    cdef const long[:] flow_u
    cdef const long[:] flow_v
    cdef const long[:] node_cap
    cdef long[:] load
    cdef long[:] counts
    cdef double[:] den
    cdef double[:] num
    cdef double[:] by_load
    cdef double scale
    cdef long capacity
    cdef Py_ssize_t n_cls, n_flows

    cdef void visit(self, double logw, long res_load) noexcept:
        cdef Py_ssize_t i, h
        cdef double f, w
        cdef bint full
        if logw > self.scale + RESCALE_GAP:
            f = exp(self.scale - logw)
            for i in range(self.n_flows):
                self.den[i] *= f
                self.num[i] *= f
            for h in range(self.capacity + 1):
                self.by_load[h] *= f
            self.scale = logw
        w = exp(logw - self.scale)
        self.by_load[res_load] += w
        full = res_load == self.capacity
        for i in range(self.n_flows):
            if (self.load[self.flow_u[i]] < self.node_cap[self.flow_u[i]]
                    and self.load[self.flow_v[i]] < self.node_cap[self.flow_v[i]]):
                self.den[i] += w
                if full:
                    self.num[i] += w

    cdef void descend(self, Py_ssize_t start, double logw, long res_load) noexcept:
        cdef Py_ssize_t k
        cdef long u, v, r
        self.visit(logw, res_load)
        for k in range(start, self.n_cls):
            u = self.cls_u[k]
            v = self.cls_v[k]
            if self.load[u] >= self.node_cap[u] or self.load[v] >= self.node_cap[v]:
                continue
            r = self.cls_res[k]
            if r and res_load >= self.capacity:
                continue
            self.counts[k] += 1
            self.load[u] += 1
            self.load[v] += 1
            self.descend(k, logw + self.cls_logrho[k] - log(<double>self.counts[k]), res_load + r)
            self.counts[k] -= 1
            self.load[u] -= 1
            self.load[v] -= 1


def accumulate_blocking(cls_u, cls_v, cls_res, cls_logrho, flow_u, flow_v, node_cap, long capacity):
    cdef _Accumulator acc = _Accumulator()
    acc.cls_u = np.ascontiguousarray(cls_u, dtype=np.int64)
    acc.cls_v = np.ascontiguousarray(cls_v, dtype=np.int64)
    acc.cls_res = np.ascontiguousarray(cls_res, dtype=np.int64)
    acc.cls_logrho = np.ascontiguousarray(cls_logrho, dtype=np.float64)
    acc.flow_u = np.ascontiguousarray(flow_u, dtype=np.int64)
    acc.flow_v = np.ascontiguousarray(flow_v, dtype=np.int64)
    acc.node_cap = np.ascontiguousarray(node_cap, dtype=np.int64)
    acc.n_cls = len(acc.cls_u)
    acc.n_flows = len(acc.flow_u)
    acc.load = np.zeros(len(acc.node_cap), dtype=np.int64)
    acc.counts = np.zeros(acc.n_cls, dtype=np.int64)
    den = np.zeros(acc.n_flows)
    num = np.zeros(acc.n_flows)
    by_load = np.zeros(capacity + 1)
    acc.den = den
    acc.num = num
    acc.by_load = by_load
    acc.scale = 0.0
    acc.capacity = capacity
    acc.descend(0, 0.0, 0)
    return den, num, by_load, acc.scale


def walk_session(int engine, bint single, const long[:] per_start, const long[:] per_len,
                 const long[:] per_seg, const double[:] per_fixed, const double[:] per_mean,
                 const double[:] per_exit, const double[:] ph_mean, const double[:] ph_next,
                 const double[:] ph_succ, const double[:] expo, const double[:] unif,
                 Py_ssize_t pos, double[:] seg_dur, long[:] seg_succ):
    cdef Py_ssize_t k, i, last, seg
    cdef Py_ssize_t n_per = per_start.shape[0]
    cdef double dur, u
    cdef bint success
    for k in range(n_per):
        seg = per_seg[k]
        success = False
        if engine == ENGINE_COX:
            i = per_start[k]
            last = i + per_len[k] - 1
            dur = 0.0
            while True:
                dur += expo[pos] * ph_mean[i]
                u = unif[pos]
                pos += 1
                if i < last and u < ph_next[i]:
                    i += 1
                    continue
                success = u < ph_next[i] + ph_succ[i]
                break
        elif engine == ENGINE_EXPONENTIAL:
            dur = expo[pos] * per_mean[k]
            success = unif[pos] < per_exit[k]
            pos += 1
        else:
            dur = per_fixed[k]
            success = unif[pos] < per_exit[k]
            pos += 1
        seg_dur[seg] += dur
        if success:
            seg_succ[seg] += 1
            if single:
                return seg, pos
    return -1, pos
