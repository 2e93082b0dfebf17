"""Compiled fast path for policy-rollout scoring.

The expected-free-energy rollout is a sequential per-particle loop whose
numpy formulation is dominated by per-call overhead on small arrays.  This
module packs the whole loop (model transition, normative projection,
observation sampling, preference scoring, epistemic terms) into one numba
kernel.  The numpy implementation in :mod:`model` / :mod:`planner` remains
the reference; tests assert agreement.

All randomness is pre-drawn by the caller with a numpy Generator in a fixed
order, so runs stay bit-reproducible for a given seed.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional accelerator
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        if args and callable(args[0]):
            return args[0]
        return wrap


# norm parameter vector layout
(NP_STOP, NP_PRIORITY, NP_COMM, NP_SPEED_LIMIT, NP_REGION_LO, NP_REGION_HI,
 NP_STOP_SPEED, NP_ENTRY, NP_TRAIL, NP_HANDOVER, NP_VIOL, NP_COOP_SLOPE,
 NP_COOP_OFFSET, NP_COOP_FLOOR, NP_LAT_LIMIT, NP_HEAD_TOL) = range(16)

# preference parameter vector layout
(PP_MU_V, PP_SIGMA_V, PP_SIGMA_A, PP_SIGMA_OM, PP_SIGMA_LAT, PP_LAT_FLOOR,
 PP_G_NORM, PP_G_SIGNAL, PP_G_UNCOOP, PP_G_COLL, PP_SAFE_CLEAR, PP_SPEED_THR,
 PP_SPEED_SCALE) = range(13)

# vehicle parameter vector layout
(VP_LENGTH, VP_WIDTH, VP_WHEELBASE, VP_MAX_STEER, VP_MAX_ACCEL,
 VP_MAX_STEER_RATE) = range(6)

N_COMPONENTS = 11  # matches preference.ALL_KEYS ordering

_SQRT2 = math.sqrt(2.0)
_LOG_2PI = math.log(2.0 * math.pi)
EPS_OPEN = 1e-9


def norm_params_vector(norms, vehicle) -> np.ndarray:
    lat_limit = (vehicle.lane_width / 2.0 + vehicle.width / 2.0
                 + norms.lane_lateral_slack)
    return np.array([
        1.0 if norms.stop_signs else 0.0,
        1.0 if norms.priority_rule else 0.0,
        1.0 if norms.communication else 0.0,
        norms.speed_limit, norms.stop_region[0], norms.stop_region[1],
        norms.stop_speed, norms.intersection_entry, norms.trail_margin,
        norms.handover_distance, norms.violation_prob, norms.coop_slope,
        norms.coop_offset, norms.coop_floor, lat_limit, norms.lane_heading_tol,
    ])


def pref_params_vector(pref) -> np.ndarray:
    return np.array([
        pref.mu_v, pref.sigma_v, pref.sigma_a, pref.sigma_omega,
        pref.sigma_lat, pref.lat_floor, pref.g_norm, pref.g_signal,
        pref.g_uncoop, pref.g_collision, pref.safety_clearance,
        pref.speed_soft_threshold, pref.speed_soft_scale,
    ])


def vehicle_params_vector(vehicle) -> np.ndarray:
    return np.array([
        vehicle.length, vehicle.width, vehicle.wheelbase, vehicle.max_steer,
        vehicle.max_accel, vehicle.max_steer_rate,
    ])


@njit(cache=True)
def _ndtr(z):
    return 0.5 * (1.0 + math.erf(z / _SQRT2))


@njit(cache=True)
def _ndtri(q):
    """Acklam's rational approximation of the standard normal inverse CDF."""
    if q <= 0.0:
        return -np.inf
    if q >= 1.0:
        return np.inf
    a = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
    b = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01)
    c = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
         -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
    d = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
         3.754408661907416e+00)
    plow = 0.02425
    if q < plow:
        z = math.sqrt(-2.0 * math.log(q))
        x = (((((c[0] * z + c[1]) * z + c[2]) * z + c[3]) * z + c[4]) * z + c[5]) / \
            ((((d[0] * z + d[1]) * z + d[2]) * z + d[3]) * z + 1.0)
    elif q > 1.0 - plow:
        z = math.sqrt(-2.0 * math.log(1.0 - q))
        x = -(((((c[0] * z + c[1]) * z + c[2]) * z + c[3]) * z + c[4]) * z + c[5]) / \
            ((((d[0] * z + d[1]) * z + d[2]) * z + d[3]) * z + 1.0)
    else:
        z = q - 0.5
        r = z * z
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * z / \
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    # one Halley refinement step
    e = _ndtr(x) - q
    u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    x = x - u / (1.0 + 0.5 * x * u)
    return x


@njit(cache=True)
def _trunc01(mean, sigma, u):
    """Truncated-normal draw on (0,1) from one uniform; sigma may be 0."""
    if sigma <= 0.0:
        x = mean
    else:
        a = _ndtr((0.0 - mean) / sigma)
        b = _ndtr((1.0 - mean) / sigma)
        q = a + u * (b - a)
        if q < 1e-12:
            q = 1e-12
        elif q > 1.0 - 1e-12:
            q = 1.0 - 1e-12
        x = mean + sigma * _ndtri(q)
    if x < EPS_OPEN:
        x = EPS_OPEN
    elif x > 1.0 - EPS_OPEN:
        x = 1.0 - EPS_OPEN
    return x


@njit(cache=True)
def _bern_entropy(p):
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log(p) - (1.0 - p) * math.log(1.0 - p)


@njit(cache=True)
def _rect_separation(kinA, kinB, length, width):
    """Max face-axis separation of two oriented rectangles (scalar SAT)."""
    hl = 0.5 * length
    hw = 0.5 * width
    cA = math.cos(kinA[2]); sA = math.sin(kinA[2])
    cB = math.cos(kinB[2]); sB = math.sin(kinB[2])
    dx = kinB[0] - kinA[0]
    dy = kinB[1] - kinA[1]
    best = -1e300
    for k in range(4):
        if k == 0:
            ux, uy = cA, sA
            own = hl
            co, so = cB, sB
        elif k == 1:
            ux, uy = -sA, cA
            own = hw
            co, so = cB, sB
        elif k == 2:
            ux, uy = cB, sB
            own = hl
            co, so = cA, sA
        else:
            ux, uy = -sB, cB
            own = hw
            co, so = cA, sA
        center = abs(dx * ux + dy * uy)
        proj = hl * abs(co * ux + so * uy) + hw * abs(-so * ux + co * uy)
        sep = center - own - proj
        if sep > best:
            best = sep
    return best


@njit(cache=True)
def _pn_terms(d_w, dlat_w, herr_w, v_w, sigy_w, h_w, p_ego, d_ego, np_, lat_limit):
    """Per-state normative probability of one other agent."""
    q = np_[NP_VIOL]
    pn = 1.0
    if abs(dlat_w) > lat_limit or abs(herr_w) > np_[NP_HEAD_TOL]:
        pn *= q
    if v_w > np_[NP_SPEED_LIMIT]:
        pn *= q
    if np_[NP_STOP] > 0.5 and d_w >= np_[NP_ENTRY] and not h_w:
        pn *= q
    thr = np_[NP_ENTRY]
    alt = d_ego - np_[NP_TRAIL]
    if alt > thr:
        thr = alt
    ahead = d_w > thr
    if np_[NP_PRIORITY] > 0.5 and ahead and p_ego:
        pn *= q
    if np_[NP_COMM] > 0.5 and ahead:
        c = 1.0 - np_[NP_COOP_SLOPE] * max(sigy_w - np_[NP_COOP_OFFSET], 0.0)
        if c < np_[NP_COOP_FLOOR]:
            c = np_[NP_COOP_FLOOR]
        elif c > 1.0:
            c = 1.0
        pn *= c
    return pn


@njit(cache=True)
def _ratio(d, v):
    if v > 0.0:
        return d / v
    return -np.inf if d < 0 else np.inf


@njit(cache=True)
def _norm_projection(kin, ctrl, sig_next, h0, p0, pn_next, cosr, sinr, throad,
                     ego, controls, tau, H, np_, vp, lat_limit, T, dt,
                     d_s, dl_s, he_s, de_s, vv_s, h_s):
    """Projected normative probability for one particle (scalar loop).

    kin/ctrl: pre-transition (A,5)/(A,2); sig_next: post-transition signals
    (A,2); controls: the ego's (H,2) policy, consumed from index tau with
    hold-last padding.  Scratch arrays d_s..h_s have shape (A,).
    """
    A = kin.shape[0]
    W = vp[VP_WHEELBASE]
    max_steer = vp[VP_MAX_STEER]
    for a in range(A):
        d_s[a] = kin[a, 0] * cosr[a] + kin[a, 1] * sinr[a]
        dl_s[a] = kin[a, 1] * cosr[a] - kin[a, 0] * sinr[a]
        he_s[a] = kin[a, 2] - throad[a]
        de_s[a] = kin[a, 3]
        vv_s[a] = kin[a, 4]
        h_s[a] = h0[a]
    p_ego = p0[ego]
    other = 1 - ego

    mid = (1 + T) // 2
    inv_sum = 0.0
    n_ck = 0
    stop_mode = np_[NP_STOP] > 0.5
    for t in range(1, T + 1):
        d_ego_prev = d_s[ego]
        v_ego_prev = vv_s[ego]
        v_oth_prev = vv_s[other]
        h_ego_prev = h_s[ego]
        for a in range(A):
            if a == ego:
                idx = tau + t - 1
                if idx >= H:
                    idx = H - 1
                acc = controls[idx, 0]
                om = controls[idx, 1]
            else:
                acc = ctrl[a, 0]
                om = ctrl[a, 1]
            d_s[a] += vv_s[a] * math.cos(he_s[a]) * dt
            dl_s[a] += vv_s[a] * math.sin(he_s[a]) * dt
            he_s[a] += vv_s[a] / W * math.tan(de_s[a]) * dt
            de_s[a] += om * dt
            if de_s[a] > max_steer:
                de_s[a] = max_steer
            elif de_s[a] < -max_steer:
                de_s[a] = -max_steer
            vv_s[a] += acc * dt
            if vv_s[a] < 0.0:
                vv_s[a] = 0.0
            if (not h_s[a]) and np_[NP_REGION_LO] <= d_s[a] <= np_[NP_REGION_HI] \
                    and vv_s[a] < np_[NP_STOP_SPEED]:
                h_s[a] = True
        if np_[NP_PRIORITY] > 0.5 and not p_ego:
            if stop_mode:
                if h_s[ego] and not h_ego_prev and d_s[ego] > d_s[other]:
                    p_ego = True
            else:
                if d_ego_prev < np_[NP_HANDOVER] <= d_s[ego]:
                    if _ratio(d_s[ego], v_ego_prev) > _ratio(d_s[other],
                                                             v_oth_prev):
                        p_ego = True
        if t == 1 or t == mid or t == T:
            pn = 1.0
            for w in range(A):
                if w == ego:
                    continue
                pn *= _pn_terms(d_s[w], dl_s[w], he_s[w], vv_s[w],
                                sig_next[w, 1], h_s[w], p_ego, d_s[ego],
                                np_, lat_limit)
            inv_sum += 1.0 / pn
            n_ck += 1
    harm = n_ck / inv_sum
    return pn_next if pn_next < harm else harm


@njit(cache=True)
def _pn_state(kin, sig, h, p, ego, cosr, sinr, throad, np_, lat_limit):
    """Normative probability of one joint state (scalar)."""
    A = kin.shape[0]
    d_ego = kin[ego, 0] * cosr[ego] + kin[ego, 1] * sinr[ego]
    pn = 1.0
    for w in range(A):
        if w == ego:
            continue
        d_w = kin[w, 0] * cosr[w] + kin[w, 1] * sinr[w]
        dl_w = kin[w, 1] * cosr[w] - kin[w, 0] * sinr[w]
        he_w = kin[w, 2] - throad[w]
        pn *= _pn_terms(d_w, dl_w, he_w, kin[w, 4], sig[w, 1], h[w], p[ego],
                        d_ego, np_, lat_limit)
    return pn


@njit(cache=True)
def rollout_efe_kernel(kin, ctrl, sig, h, p, log_w, controls, sig_plan, ego,
                       zn_kin, zn_ctrl, u_sig, zn_okin, zn_octrl, u_osig,
                       u_coop, cosr, sinr, throad, kstd_ego, kstd_ov, ustd_ov,
                       xobs, uobs, sigma_sig, np_, pp, vp, T_norm, dt,
                       g_prag, g_epist, step_lnp, comps):
    """Score M policies over H steps on an (M, N) particle block, in place.

    State arrays are (M,N,A,.) and are advanced in place; log_w (M,N) gains
    the log projected-normative weights.  Outputs g_prag/g_epist (M,),
    step_lnp (M,H) and comps (M,11) are accumulated.
    """
    M, N, A = kin.shape[0], kin.shape[1], kin.shape[2]
    H = controls.shape[1]
    MR = zn_kin.shape[1]       # 1 -> common random numbers across candidates
    W = vp[VP_WHEELBASE]
    max_steer = vp[VP_MAX_STEER]
    max_acc = vp[VP_MAX_ACCEL]
    max_om = vp[VP_MAX_STEER_RATE]
    lane_lat_limit = np_[NP_LAT_LIMIT]
    length = vp[VP_LENGTH]
    width = vp[VP_WIDTH]

    kin_prev = np.empty((A, 5))
    ctrl_prev = np.empty((A, 2))
    h_prev = np.empty(A, np.bool_)
    p_prev = np.empty(A, np.bool_)
    d_s = np.empty(A)
    dl_s = np.empty(A)
    he_s = np.empty(A)
    de_s = np.empty(A)
    vv_s = np.empty(A)
    h_s = np.empty(A, np.bool_)
    lnp_buf = np.empty(N)
    comp_buf = np.empty((N, N_COMPONENTS))
    wn_buf = np.empty(N)
    okin = np.empty((A, 5))
    octrl = np.empty((A, 2))
    osig = np.empty((A, 2))

    ln_sv = math.log(pp[PP_SIGMA_V]) + 0.5 * _LOG_2PI
    ln_sa = math.log(pp[PP_SIGMA_A]) + 0.5 * _LOG_2PI
    ln_so = math.log(pp[PP_SIGMA_OM]) + 0.5 * _LOG_2PI
    ln_sl = math.log(pp[PP_SIGMA_LAT]) + 0.5 * _LOG_2PI

    for m in range(M):
        mr = m if MR > 1 else 0
        for tau in range(H):
            prompting = sig_plan[tau, 0] > 0.5
            a_cmd = controls[m, tau, 0]
            om_cmd = controls[m, tau, 1]
            for n in range(N):
                # ---- transition of one particle --------------------------
                for a in range(A):
                    for d5 in range(5):
                        kin_prev[a, d5] = kin[m, n, a, d5]
                    ctrl_prev[a, 0] = ctrl[m, n, a, 0]
                    ctrl_prev[a, 1] = ctrl[m, n, a, 1]
                    h_prev[a] = h[m, n, a]
                    p_prev[a] = p[m, n, a]
                for a in range(A):
                    if a == ego:
                        acc = a_cmd
                        om = om_cmd
                    else:
                        acc = ctrl_prev[a, 0]
                        om = ctrl_prev[a, 1]
                    x = kin_prev[a, 0]; y = kin_prev[a, 1]
                    th = kin_prev[a, 2]; de = kin_prev[a, 3]
                    v = kin_prev[a, 4]
                    std = kstd_ego if a == ego else kstd_ov
                    nx = x + v * math.cos(th) * dt + zn_kin[tau, mr, n, a, 0] * std[0]
                    ny = y + v * math.sin(th) * dt + zn_kin[tau, mr, n, a, 1] * std[1]
                    nth = th + v / W * math.tan(de) * dt + zn_kin[tau, mr, n, a, 2] * std[2]
                    nde = de + om * dt + zn_kin[tau, mr, n, a, 3] * std[3]
                    if nde > max_steer:
                        nde = max_steer
                    elif nde < -max_steer:
                        nde = -max_steer
                    nv = v + acc * dt + zn_kin[tau, mr, n, a, 4] * std[4]
                    if nv < 0.0:
                        nv = 0.0
                    kin[m, n, a, 0] = nx; kin[m, n, a, 1] = ny
                    kin[m, n, a, 2] = nth; kin[m, n, a, 3] = nde
                    kin[m, n, a, 4] = nv
                    if a == ego:
                        ctrl[m, n, a, 0] = acc
                        ctrl[m, n, a, 1] = om
                        sig[m, n, a, 0] = sig_plan[tau, 0]
                        sig[m, n, a, 1] = sig_plan[tau, 1]
                    else:
                        ca = ctrl_prev[a, 0] + zn_ctrl[tau, mr, n, a, 0] * ustd_ov[0]
                        co = ctrl_prev[a, 1] + zn_ctrl[tau, mr, n, a, 1] * ustd_ov[1]
                        if ca > max_acc:
                            ca = max_acc
                        elif ca < -max_acc:
                            ca = -max_acc
                        if co > max_om:
                            co = max_om
                        elif co < -max_om:
                            co = -max_om
                        ctrl[m, n, a, 0] = ca
                        ctrl[m, n, a, 1] = co
                        sig[m, n, a, 0] = _trunc01(sig[m, n, a, 0], sigma_sig,
                                                   u_sig[tau, mr, n, a, 0])
                        if prompting:
                            sig[m, n, a, 1] = 1.0 if u_sig[tau, mr, n, a, 1] < \
                                sig[m, n, a, 1] else 0.0
                        else:
                            sig[m, n, a, 1] = _trunc01(sig[m, n, a, 1], sigma_sig,
                                                       u_sig[tau, mr, n, a, 1])
                # flags
                for a in range(A):
                    d_new = kin[m, n, a, 0] * cosr[a] + kin[m, n, a, 1] * sinr[a]
                    if (not h_prev[a]) and np_[NP_REGION_LO] <= d_new <= \
                            np_[NP_REGION_HI] and kin[m, n, a, 4] < np_[NP_STOP_SPEED]:
                        h[m, n, a] = True
                for a in range(A):
                    if p[m, n, a]:
                        continue
                    w_o = 1 - a
                    d_a = kin[m, n, a, 0] * cosr[a] + kin[m, n, a, 1] * sinr[a]
                    d_o = kin[m, n, w_o, 0] * cosr[w_o] + kin[m, n, w_o, 1] * sinr[w_o]
                    if np_[NP_STOP] > 0.5:
                        if h[m, n, a] and not h_prev[a] and d_a > d_o:
                            p[m, n, a] = True
                    else:
                        d_a_old = kin_prev[a, 0] * cosr[a] + kin_prev[a, 1] * sinr[a]
                        if d_a_old < np_[NP_HANDOVER] <= d_a:
                            if _ratio(d_a, kin_prev[a, 4]) > \
                                    _ratio(d_o, kin_prev[w_o, 4]):
                                p[m, n, a] = True

                # ---- projected normative weight --------------------------
                pn_next = _pn_state(kin[m, n], sig[m, n], h[m, n], p[m, n],
                                    ego, cosr, sinr, throad, np_, lane_lat_limit)
                w_norm = _norm_projection(kin_prev, ctrl_prev, sig[m, n],
                                          h_prev, p_prev, pn_next, cosr, sinr,
                                          throad, ego, controls[m], tau, H,
                                          np_, vp, lane_lat_limit, T_norm, dt,
                                          d_s, dl_s, he_s, de_s, vv_s, h_s)
                log_w[m, n] += math.log(w_norm)

                # ---- predicted observation and log preference -------------
                for a in range(A):
                    for d5 in range(5):
                        okin[a, d5] = kin[m, n, a, d5] + \
                            zn_okin[tau, mr, n, a, d5] * xobs[d5]
                    octrl[a, 0] = ctrl[m, n, a, 0] + zn_octrl[tau, mr, n, a, 0] * uobs[0]
                    octrl[a, 1] = ctrl[m, n, a, 1] + zn_octrl[tau, mr, n, a, 1] * uobs[1]
                    for d2 in range(2):
                        par = sig[m, n, a, d2]
                        if a != ego:
                            par = par ** 10
                        osig[a, d2] = 1.0 if u_osig[tau, mr, n, a, d2] < par else 0.0

                other = 1 - ego
                d_ego = okin[ego, 0] * cosr[ego] + okin[ego, 1] * sinr[ego]
                d_oth = okin[other, 0] * cosr[other] + okin[other, 1] * sinr[other]
                dlat_ego = okin[ego, 1] * cosr[ego] - okin[ego, 0] * sinr[ego]
                vo = okin[ego, 4]
                zz = (vo - pp[PP_MU_V]) / pp[PP_SIGMA_V]
                c_speed = -0.5 * zz * zz - ln_sv
                zz = octrl[ego, 0] / pp[PP_SIGMA_A]
                c_accel = -0.5 * zz * zz - ln_sa
                zz = octrl[ego, 1] / pp[PP_SIGMA_OM]
                c_steer = -0.5 * zz * zz - ln_so
                zz = dlat_ego / pp[PP_SIGMA_LAT]
                c_lat = -0.5 * zz * zz - ln_sl
                if c_lat < pp[PP_LAT_FLOOR]:
                    c_lat = pp[PP_LAT_FLOOR]
                sep = _rect_separation(okin[ego], okin[other], length, width)
                c_coll = pp[PP_G_COLL] if sep <= 0.0 else 0.0
                gap = sep if sep > 0.0 else 0.0
                pen = 1.0 - gap / pp[PP_SAFE_CLEAR]
                c_safe = pp[PP_G_COLL] * pen if pen > 0.0 else 0.0
                c_sl = 0.0
                if vo > pp[PP_SPEED_THR]:
                    c_sl = pp[PP_G_NORM] * (vo - pp[PP_MU_V]) / pp[PP_SPEED_SCALE]
                c_stop = 0.0
                if np_[NP_STOP] > 0.5 and d_ego >= np_[NP_ENTRY] and not h[m, n, ego]:
                    c_stop = pp[PP_G_NORM]
                c_prio = 0.0
                if np_[NP_PRIORITY] > 0.5:
                    thr = np_[NP_ENTRY]
                    alt = d_oth - np_[NP_TRAIL]
                    if alt > thr:
                        thr = alt
                    viol = d_ego > thr and not p[m, n, ego]
                    if np_[NP_COMM] > 0.5 and osig[other, 1] > 0.5:
                        viol = False
                    if viol:
                        c_prio = 0.5 * pp[PP_G_NORM]
                c_comm = 0.0
                c_coop = 0.0
                if np_[NP_COMM] > 0.5:
                    mult = 1.0
                    if np_[NP_STOP] > 0.5 and not h[m, n, ego]:
                        mult = 10.0
                    c_comm = pp[PP_G_SIGNAL] * (osig[ego, 0] + osig[ego, 1]) * mult
                    if np_[NP_PRIORITY] > 0.5:
                        p_flag = p[m, n, ego]
                    else:
                        r_e = _ratio(d_ego, okin[ego, 4])
                        r_o = _ratio(d_oth, okin[other, 4])
                        if r_e > 1e9:
                            r_e = 1e9
                        elif r_e < -1e9:
                            r_e = -1e9
                        if r_o > 1e9:
                            r_o = 1e9
                        elif r_o < -1e9:
                            r_o = -1e9
                        prob = 1.0 / (1.0 + math.exp(-3.0 * (r_e - r_o)))
                        p_flag = u_coop[tau, mr, n] < prob
                    yielding = osig[ego, 1] > 0.5
                    if (yielding and p_flag) or \
                            (osig[other, 0] > 0.5 and not p_flag and not yielding):
                        c_coop = pp[PP_G_UNCOOP]

                comp_buf[n, 0] = c_speed
                comp_buf[n, 1] = c_accel
                comp_buf[n, 2] = c_steer
                comp_buf[n, 3] = c_lat
                comp_buf[n, 4] = c_coll
                comp_buf[n, 5] = c_safe
                comp_buf[n, 6] = c_sl
                comp_buf[n, 7] = c_stop
                comp_buf[n, 8] = c_prio
                comp_buf[n, 9] = c_comm
                comp_buf[n, 10] = c_coop
                lnp_buf[n] = (c_speed + c_accel + c_steer + c_lat + c_coll +
                              c_safe + c_sl + c_stop + c_prio + c_comm + c_coop)

            # ---- weighted reductions over particles ----------------------
            mx = -np.inf
            for n in range(N):
                if log_w[m, n] > mx:
                    mx = log_w[m, n]
            wsum = 0.0
            for n in range(N):
                wsum += math.exp(log_w[m, n] - mx)
            e_lnp = 0.0
            for n in range(N):
                wn = math.exp(log_w[m, n] - mx) / wsum
                wn_buf[n] = wn
                e_lnp += wn * lnp_buf[n]
                for kcomp in range(N_COMPONENTS):
                    comps[m, kcomp] += wn * comp_buf[n, kcomp]
            g_prag[m] += e_lnp
            step_lnp[m, tau] = e_lnp

            # epistemic: gaussian dims moment matched, signal dims exact
            epist = 0.0
            for a in range(A):
                for d5 in range(5):
                    mu = 0.0
                    for n in range(N):
                        mu += wn_buf[n] * kin[m, n, a, d5]
                    var = 0.0
                    for n in range(N):
                        dev = kin[m, n, a, d5] - mu
                        var += wn_buf[n] * dev * dev
                    s2 = xobs[d5] * xobs[d5]
                    if s2 < 1e-24:
                        s2 = 1e-24
                    epist += 0.5 * math.log1p(var / s2)
                for d2 in range(2):
                    mu = 0.0
                    for n in range(N):
                        mu += wn_buf[n] * ctrl[m, n, a, d2]
                    var = 0.0
                    for n in range(N):
                        dev = ctrl[m, n, a, d2] - mu
                        var += wn_buf[n] * dev * dev
                    s2 = uobs[d2] * uobs[d2]
                    if s2 < 1e-24:
                        s2 = 1e-24
                    epist += 0.5 * math.log1p(var / s2)
                if a != ego:
                    for d2 in range(2):
                        mix = 0.0
                        amb = 0.0
                        for n in range(N):
                            qq = sig[m, n, a, d2] ** 10
                            mix += wn_buf[n] * qq
                            amb += wn_buf[n] * _bern_entropy(qq)
                        epist += _bern_entropy(mix) - amb
            g_epist[m] += epist
    return 0
