"""Pure-Python implementations of the hot kernels.

``_ckernels.pyx`` mirrors these functions line for line; both must consume
random numbers identically so that a run is bit-identical whichever backend
is loaded.
"""
import math

ENGINE_DISCRETE = 0
ENGINE_EXPONENTIAL = 1
ENGINE_COX = 2

# accumulators are rescaled when a weight exceeds the running scale by this much (log units)
_RESCALE_GAP = 50.0


def accumulate_blocking(cls_u, cls_v, cls_res, cls_logrho, flow_u, flow_v, node_cap, capacity):
    """Sum product-form weights over every admissible class-count vector.

    Classes are (flow, active-or-idle) pairs; ``cls_res[k]`` says whether a
    class occupies a switch resource.  Every class occupies one qubit at both
    of its nodes.  The state space is ``sum(res n) <= capacity`` and
    ``node load <= node_cap``.  Weights are ``prod rho_k^n_k / n_k!``.

    Returns ``(den, num, by_load, log_scale)``: per flow, ``den`` sums weights
    of states where both of the flow's nodes have a free qubit and ``num``
    additionally requires all resources busy; ``by_load[h]`` sums weights by
    resource load.  All sums are scaled by ``exp(-log_scale)``.
    """
    n_cls = len(cls_u)
    n_flows = len(flow_u)
    load = [0] * len(node_cap)
    counts = [0] * n_cls
    den = [0.0] * n_flows
    num = [0.0] * n_flows
    by_load = [0.0] * (capacity + 1)
    scale = [0.0]

    def visit(logw, res_load):
        if logw > scale[0] + _RESCALE_GAP:
            f = math.exp(scale[0] - logw)
            for i in range(n_flows):
                den[i] *= f
                num[i] *= f
            for h in range(capacity + 1):
                by_load[h] *= f
            scale[0] = logw
        w = math.exp(logw - scale[0])
        by_load[res_load] += w
        full = res_load == capacity
        for i in range(n_flows):
            if load[flow_u[i]] < node_cap[flow_u[i]] and load[flow_v[i]] < node_cap[flow_v[i]]:
                den[i] += w
                if full:
                    num[i] += w

    def descend(start, logw, res_load):
        visit(logw, res_load)
        for k in range(start, n_cls):
            u = cls_u[k]
            v = cls_v[k]
            if load[u] >= node_cap[u] or load[v] >= node_cap[v]:
                continue
            r = cls_res[k]
            if r and res_load >= capacity:
                continue
            counts[k] += 1
            load[u] += 1
            load[v] += 1
            descend(k, logw + cls_logrho[k] - math.log(counts[k]), res_load + r)
            counts[k] -= 1
            load[u] -= 1
            load[v] -= 1

    descend(0, 0.0, 0)
    return den, num, by_load, scale[0]


def walk_session(engine, single, per_start, per_len, per_seg, per_fixed, per_mean,
                 per_exit, ph_mean, ph_next, ph_succ, expo, unif, pos, seg_dur, seg_succ):
    """Sample one session's segment durations and success counts in place.

    Segments alternate resource-holding blocks (even index) and idle gaps
    (odd index).  ``pos`` is the read offset into the random buffers; one
    (exponential, uniform) pair is consumed per period by the discrete and
    exponential engines and per visited phase by the Cox engine.

    Returns ``(end_seg, pos)`` where ``end_seg`` is the segment in which a
    strict-single session stopped on success, or -1 if it ran to the end.
    """
    n_per = len(per_start)
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
