"""Hot numeric kernels: control-law cores and the closed-loop stepping loop.

Everything here is written in nopython-compatible style and compiled with
numba unless DELAYPLATOON_NUMBA=0, in which case the same code runs
interpreted over numpy (see _accel).  The module-level controller and
predictor APIs wrap the same cores, so there is a single source of truth for
the formulas.
"""

import numpy as np

from ._accel import NUMBA_ENABLED, maybe_njit

# policy codes used by the stepping loop
POLICY_CONSTANT = 0
POLICY_DCH = 1
POLICY_EXT = 2

# leader segment codes
SEG_CRUISE = 0
SEG_PULSE = 1


@maybe_njit
def dc_errors(delta_adj, delta_dot, q, v, q_hat, v_hat, a_hat, a_prev):
    """(e, edot, eddot) for the delayed constant spacing policy."""
    e = delta_adj + q - q_hat
    edot = delta_dot + v - v_hat
    eddot = a_prev - a_hat
    return e, edot, eddot


@maybe_njit
def dch_errors(h_v, delta_adj, delta_dot, v_hat, a_hat):
    """(e, edot) for the delayed constant headway policy."""
    return delta_adj - h_v * v_hat, delta_dot - h_v * a_hat


@maybe_njit
def ext_error(h_v, h_a, delta_adj, v, a_hat):
    """e for the delayed extended headway policy."""
    return delta_adj - h_v * v - h_a * a_hat


@maybe_njit
def dc_control(tau_i, tau_prev, k_p, k_d, k_dd, e, edot, eddot, a_prev, a_hat, u_prev_delayed):
    """Delayed-constant tracking law (feedforward of the predecessor input)."""
    return (
        (tau_i / tau_prev) * (u_prev_delayed - a_prev)
        + a_hat
        + tau_i * (k_p * e + k_d * edot + k_dd * eddot)
    )


@maybe_njit
def dch_control(tau_i, h_v, k_p, k_d, e, edot, a_prev, a_i, a_hat):
    """Delayed constant headway tracking law (needs V2V predecessor acceleration)."""
    return a_hat + (tau_i / h_v) * (a_prev - a_i + k_p * e + k_d * edot)


@maybe_njit
def ext_control(tau_i, h_v, h_a, k_p, e, dv, a_i, a_hat):
    """Delayed extended headway tracking law (onboard measurements only)."""
    return a_hat + (tau_i / h_a) * (dv - h_v * a_i + k_p * e)


@maybe_njit
def run_closed_loop(
    n_steps,
    ts,
    # per-vehicle model data
    tau,        # (nv,)
    d,          # (nv,) int64 delay steps
    phi_mat,    # (nv, 3, 3)
    gamma,      # (nv, 3)
    phi_pow_d,  # (nv, 3, 3) Phi^d
    pred_w,     # (nv, 3, dmax) column j-1 = Phi^{j-1} Gamma (j = 1 most recent)
    # per-follower policy/controller data
    policy,     # (nf,) int64 codes
    h_v,        # (nf,)
    h_a,        # (nf,)
    standstill, # (nf,)
    k_p,        # (nf,)
    k_d,        # (nf,)
    k_dd,       # (nf,)
    # leader profile as contiguous segments
    seg_kind,   # (ns,) int64
    seg_t_end,  # (ns,) cumulative end times
    seg_p1,     # (ns,) cruise v_ref / pulse amplitude
    seg_p2,     # (ns,) cruise gain / unused
    # initial condition
    x0,         # (nv, 3)
    hist0,      # (nv, dmax) chronological, oldest first
    # options
    radar_hold, radar_period, v2v_hold, v2v_period, clamp_reverse,
):
    nv = tau.shape[0]
    nf = nv - 1
    ns = seg_kind.shape[0]

    xq = np.empty(nv)
    xv = np.empty(nv)
    xa = np.empty(nv)
    for i in range(nv):
        xq[i] = x0[i, 0]
        xv[i] = x0[i, 1]
        xa[i] = x0[i, 2]

    dmax = hist0.shape[1]
    hist = np.zeros((nv, max(dmax, 1)))
    head = np.zeros(nv, dtype=np.int64)
    for i in range(nv):
        for m in range(d[i]):
            hist[i, m] = hist0[i, m]

    # sample-and-hold state (refreshes at t = 0 on first use)
    held_delta = np.zeros(max(nf, 1))
    held_ddelta = np.zeros(max(nf, 1))
    held_pv = np.zeros(max(nf, 1))
    held_pa = np.zeros(max(nf, 1))
    held_pu = np.zeros(max(nf, 1))
    next_radar = np.zeros(max(nf, 1))
    next_v2v = np.zeros(max(nf, 1))

    t_log = np.empty(n_steps + 1)
    q_log = np.empty((n_steps + 1, nv))
    v_log = np.empty((n_steps + 1, nv))
    a_log = np.empty((n_steps + 1, nv))
    u_log = np.empty((n_steps + 1, nv))
    e_log = np.empty((n_steps + 1, max(nf, 1)))
    delta_log = np.empty((n_steps + 1, max(nf, 1)))
    dref_log = np.empty((n_steps + 1, max(nf, 1)))

    u_cmd = np.zeros(nv)
    seg = 0

    for k in range(n_steps + 1):
        t = k * ts

        # leader input from the profile (0 past the last segment)
        while seg < ns and t >= seg_t_end[seg]:
            seg += 1
        if seg < ns:
            if seg_kind[seg] == SEG_CRUISE:
                u_cmd[0] = seg_p2[seg] * (seg_p1[seg] - xv[0])
            else:
                u_cmd[0] = seg_p1[seg]
        else:
            u_cmd[0] = 0.0

        # followers front to back, all using predecessor values at time t
        for i in range(1, nv):
            f = i - 1
            delta_true = xq[i - 1] - xq[i]
            ddelta_true = xv[i - 1] - xv[i]
            pv = xv[i - 1]
            pa = xa[i - 1]
            if d[i - 1] > 0:
                pu_del = hist[i - 1, head[i - 1]]
            else:
                pu_del = u_cmd[i - 1]

            delta_m = delta_true
            ddelta_m = ddelta_true
            if radar_hold:
                if t >= next_radar[f]:
                    held_delta[f] = delta_true
                    held_ddelta[f] = ddelta_true
                    next_radar[f] += radar_period
                delta_m = held_delta[f]
                ddelta_m = held_ddelta[f]
            if v2v_hold:
                if t >= next_v2v[f]:
                    held_pv[f] = pv
                    held_pa[f] = pa
                    held_pu[f] = pu_del
                    next_v2v[f] += v2v_period
                pv = held_pv[f]
                pa = held_pa[f]
                pu_del = held_pu[f]

            # exact d-step prediction of the ego state
            di = d[i]
            qh = phi_pow_d[i, 0, 0] * xq[i] + phi_pow_d[i, 0, 1] * xv[i] + phi_pow_d[i, 0, 2] * xa[i]
            vh = phi_pow_d[i, 1, 0] * xq[i] + phi_pow_d[i, 1, 1] * xv[i] + phi_pow_d[i, 1, 2] * xa[i]
            ah = phi_pow_d[i, 2, 0] * xq[i] + phi_pow_d[i, 2, 1] * xv[i] + phi_pow_d[i, 2, 2] * xa[i]
            for j in range(1, di + 1):
                um = hist[i, (head[i] + di - j) % di]
                qh += pred_w[i, 0, j - 1] * um
                vh += pred_w[i, 1, j - 1] * um
                ah += pred_w[i, 2, j - 1] * um

            delta_adj = delta_m - standstill[f]
            if policy[f] == POLICY_CONSTANT:
                e, edot, eddot = dc_errors(
                    delta_adj, ddelta_m, xq[i], xv[i], qh, vh, ah, pa
                )
                u = dc_control(
                    tau[i], tau[i - 1], k_p[f], k_d[f], k_dd[f],
                    e, edot, eddot, pa, ah, pu_del,
                )
                dref = (qh - xq[i]) + standstill[f]
            elif policy[f] == POLICY_DCH:
                e, edot = dch_errors(h_v[f], delta_adj, ddelta_m, vh, ah)
                u = dch_control(
                    tau[i], h_v[f], k_p[f], k_d[f], e, edot, pa, xa[i], ah
                )
                dref = h_v[f] * vh + standstill[f]
            else:
                e = ext_error(h_v[f], h_a[f], delta_adj, xv[i], ah)
                u = ext_control(tau[i], h_v[f], h_a[f], k_p[f], e, ddelta_m, xa[i], ah)
                dref = h_v[f] * xv[i] + h_a[f] * ah + standstill[f]

            u_cmd[i] = u
            e_log[k, f] = e
            delta_log[k, f] = delta_true
            dref_log[k, f] = dref

        t_log[k] = t
        for i in range(nv):
            q_log[k, i] = xq[i]
            v_log[k, i] = xv[i]
            a_log[k, i] = xa[i]
            u_log[k, i] = u_cmd[i]

        if k == n_steps:
            break

        # advance every vehicle one exact ZOH step with its delayed input
        for i in range(nv):
            if d[i] > 0:
                ud = hist[i, head[i]]
            else:
                ud = u_cmd[i]
            qn = phi_mat[i, 0, 0] * xq[i] + phi_mat[i, 0, 1] * xv[i] + phi_mat[i, 0, 2] * xa[i] + gamma[i, 0] * ud
            vn = phi_mat[i, 1, 0] * xq[i] + phi_mat[i, 1, 1] * xv[i] + phi_mat[i, 1, 2] * xa[i] + gamma[i, 1] * ud
            an = phi_mat[i, 2, 0] * xq[i] + phi_mat[i, 2, 1] * xv[i] + phi_mat[i, 2, 2] * xa[i] + gamma[i, 2] * ud
            if clamp_reverse and vn < 0.0:
                vn = 0.0
                if an < 0.0:
                    an = 0.0
            xq[i] = qn
            xv[i] = vn
            xa[i] = an
            if d[i] > 0:
                hist[i, head[i]] = u_cmd[i]
                head[i] = (head[i] + 1) % d[i]

    return t_log, q_log, v_log, a_log, u_log, e_log, delta_log, dref_log


def _qp_grid_mag2_loops(xs, ys, coeffs, deg, delays):
    """|p|^2 of a quasi-polynomial on the grid xs x i*ys (scalar loops).

    coeffs is (n_terms, max_deg+1) ascending with active degrees deg;
    e^{-lambda theta} is factorized into per-axis tables so the inner loop
    is pure arithmetic.
    """
    nx = xs.shape[0]
    ny = ys.shape[0]
    nt = coeffs.shape[0]
    ex = np.empty((nt, nx))
    eyr = np.empty((nt, ny))
    eyi = np.empty((nt, ny))
    for m in range(nt):
        for ix in range(nx):
            ex[m, ix] = np.exp(-delays[m] * xs[ix])
        for iy in range(ny):
            eyr[m, iy] = np.cos(delays[m] * ys[iy])
            eyi[m, iy] = -np.sin(delays[m] * ys[iy])
    out = np.empty((ny, nx))
    for iy in range(ny):
        for ix in range(nx):
            lam = complex(xs[ix], ys[iy])
            pr = 0.0
            pi = 0.0
            for m in range(nt):
                c = 0.0 + 0.0j
                for kk in range(deg[m], -1, -1):
                    c = c * lam + coeffs[m, kk]
                er = ex[m, ix] * eyr[m, iy]
                ei = ex[m, ix] * eyi[m, iy]
                pr += c.real * er - c.imag * ei
                pi += c.real * ei + c.imag * er
            out[iy, ix] = pr * pr + pi * pi
    return out


def qp_grid_mag2_numpy(xs, ys, coeffs, deg, delays):
    """Vectorized numpy evaluation of _qp_grid_mag2_loops (fallback path)."""
    lam = xs[None, :] + 1j * ys[:, None]
    total = np.zeros_like(lam)
    for m in range(coeffs.shape[0]):
        c = np.zeros_like(lam)
        for kk in range(deg[m], -1, -1):
            c = c * lam + coeffs[m, kk]
        total += c * (
            np.exp(-delays[m] * xs)[None, :] * np.exp(-1j * delays[m] * ys)[:, None]
        )
    return total.real**2 + total.imag**2


if NUMBA_ENABLED:
    qp_grid_mag2 = maybe_njit(_qp_grid_mag2_loops)
else:
    qp_grid_mag2 = qp_grid_mag2_numpy
