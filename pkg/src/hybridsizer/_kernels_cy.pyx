# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled step and rollout kernels.

Mirrors ``_kernels_py`` column for column; see that module for the
argument conventions.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, tanh, exp

from .plant import SocBoundError

cnp.import_array()

BACKEND = "cython"

cdef enum:
    N_COLS = 43
    OBS_DIM = 9
    MAX_WIDTH = 1024

cdef double EPS_BAT = 1e-6
cdef double SOC_TOL = 1e-9


cdef inline double dmin(double a, double b) nogil:
    return a if a < b else b


cdef inline double dmax(double a, double b) nogil:
    return a if a > b else b


cdef inline double clip01(double a) nogil:
    if a != a:
        return 0.0
    return dmin(dmax(a, 0.0), 1.0)


cdef int fused_step(double* row, double soc, const double* a_in, double p_pred, double p_avail,
                    const double* pr, const double* act, double P_pv, double E_raw, double P_raw,
                    const double* pv, int mode) nogil:
    """Fill one trace row; returns 1 on a SOC fault."""
    cdef double Pmin = pv[0], Pmax = pv[1], eta_c = pv[2], eta_d = pv[3], Smin = pv[4], Smax = pv[5]
    cdef double beta = pv[6], dt = pv[7], H_res = pv[8], H_up = pv[9], H_dn = pv[10]
    cdef double kappa = pv[11], pi_imb = pv[12], P_inv = pv[13]
    cdef double a_e = clip01(a_in[0]), a_res = clip01(a_in[1]), a_up = clip01(a_in[2])
    cdef double a_dn = clip01(a_in[3]), a_imb = clip01(a_in[4])
    cdef bint has = E_raw >= EPS_BAT and P_raw >= EPS_BAT
    cdef double E_bat = E_raw if has else 0.0
    cdef double P_bat = P_raw if has else 0.0
    cdef double P_poi = Pmax - Pmin
    cdef double E_up = 0.0, E_dn = 0.0
    cdef double M_pv, center_pv, b_res, M_bat_up, b_up, b_up_pv, b_up_bat, M_bat_dn, b_dn, b_dn_bat
    cdef double B_dis, B_chg, lo_poi, hi_poi, b_tilde, center, b_e, b_e_pv, b_e_bat, resid
    cdef double x_chgE, x_disE, x_cur, pv_delivered, delta_E, pv_eff, cur_poi
    cdef double avail_e, gap, surplus, bhat, Bhat
    cdef double x_chgAS, x_disAS, soc_raw, soc_next, x_e, gross, penalty, F_e, F_as, C_deg
    cdef int fault = 0

    if has:
        E_up = dmax(eta_d * E_bat * (soc - Smin), 0.0)
        E_dn = dmax(E_bat * (Smax - soc) / eta_c, 0.0)
    if mode == 1:
        M_pv = dmin(kappa * p_pred, P_inv)
        center_pv = dmin(p_pred, P_inv)
    else:
        M_pv = kappa * p_pred
        center_pv = p_pred

    b_res = 0.0
    if has:
        b_res = dmax(dmin(dmin(a_res * P_poi, P_bat), E_up / H_res), 0.0)
    M_bat_up = dmax(dmin(P_bat - b_res, (E_up - b_res * H_res) / H_up), 0.0)
    b_up = dmax(dmin(a_up * (P_poi - b_res), M_bat_up + M_pv), 0.0)
    b_up_pv = dmax(b_up - M_bat_up, 0.0)
    b_up_bat = b_up - b_up_pv
    M_bat_dn = dmin(P_bat, E_dn / H_dn)
    b_dn = dmax(dmin(a_dn * (P_poi - b_res - b_up), M_bat_dn + M_pv - b_up_pv), 0.0)
    b_dn_bat = dmin(dmax(b_dn - (M_pv - b_up_pv), 0.0), b_dn)
    B_dis = dmax(dmin(P_bat - b_res - b_up_bat, (E_up - b_res * H_res - b_up_bat * H_up) / dt), 0.0)
    B_chg = dmax(dmin(P_bat - b_dn_bat, (E_dn - b_dn_bat * H_dn) / dt), 0.0)
    lo_poi = Pmin + b_dn
    hi_poi = Pmax - b_res - b_up
    b_tilde = a_e * hi_poi + (1.0 - a_e) * lo_poi
    center = center_pv - b_up_pv
    b_e = dmin(dmax(b_tilde, center - B_chg), center + B_dis)
    b_e = dmin(dmax(b_e, lo_poi), hi_poi)

    if mode == 1:
        b_e_pv = center_pv - b_up_pv
        resid = b_e - b_e_pv
        if resid > 0:
            b_e_bat = dmin(resid, B_dis)
        else:
            b_e_bat = dmax(resid, -B_chg)
        if b_e_pv + b_e_bat > hi_poi:
            b_e_pv = hi_poi - b_e_bat
        elif b_e_pv + b_e_bat < lo_poi:
            b_e_pv = lo_poi - b_e_bat
        b_e = b_e_pv + b_e_bat
        pv_eff = dmin(p_avail, P_inv)
        x_chgE = dmax(-b_e_bat, 0.0) * dt
        x_disE = dmax(b_e_bat, 0.0) * dt
        cur_poi = dmax(pv_eff + b_e_bat - Pmax, 0.0) * dt
        x_cur = dmax(p_avail - P_inv, 0.0) * dt + cur_poi
        pv_delivered = (pv_eff - b_up_pv) * dt - cur_poi
        delta_E = pv_delivered - b_e_pv * dt
    else:
        b_e_pv = b_e
        b_e_bat = 0.0
        avail_e = p_avail - b_up_pv
        if b_e > avail_e:
            gap = b_e - avail_e
            x_disE = dmin(a_imb * gap, B_dis) * dt
            x_chgE = 0.0
            x_cur = 0.0
            delta_E = -(gap * dt - x_disE)
        else:
            surplus = avail_e - b_e
            bhat = dmax(b_dn - avail_e, 0.0)
            Bhat = dmax(dmin(P_bat - b_dn_bat, (E_dn - bhat * H_dn) / dt), 0.0)
            x_chgE = dmin(a_imb * surplus, Bhat) * dt
            x_disE = 0.0
            x_cur = dmax(p_avail * dt - x_chgE - Pmax * dt, 0.0)
            delta_E = surplus * dt - x_chgE - x_cur
        pv_delivered = (p_avail - b_up_pv) * dt - x_cur

    x_chgAS = dmax(dmin(b_dn_bat * act[2], E_dn - x_chgE), 0.0)
    x_disAS = b_res * act[0] + b_up_bat * act[1]
    if has:
        soc_raw = soc + eta_c * (x_chgE + x_chgAS) / E_bat - (x_disE + x_disAS) / (eta_d * E_bat)
    else:
        soc_raw = soc
    if soc_raw < Smin - SOC_TOL or soc_raw > Smax + SOC_TOL:
        fault = 1
        soc_next = soc_raw
    else:
        soc_next = dmin(dmax(soc_raw, Smin), Smax)
    x_e = b_e * dt + delta_E
    gross = pr[0] * x_e
    penalty = pr[0] * pi_imb * fabs(delta_E)
    F_e = gross - penalty
    F_as = pr[1] * b_res + pr[2] * b_up + pr[3] * b_dn
    C_deg = beta * (x_chgE + x_chgAS + x_disE + x_disAS)

    row[0] = soc
    row[1] = a_e
    row[2] = a_res
    row[3] = a_up
    row[4] = a_dn
    row[5] = a_imb
    row[6] = p_pred
    row[7] = p_avail
    row[8] = b_e
    row[9] = b_res
    row[10] = b_up
    row[11] = b_dn
    row[12] = b_up_pv
    row[13] = b_up_bat
    row[14] = b_dn_bat
    row[15] = B_dis
    row[16] = B_chg
    row[17] = M_pv
    row[18] = b_e_pv
    row[19] = b_e_bat
    row[20] = x_chgE
    row[21] = x_disE
    row[22] = x_chgAS
    row[23] = x_disAS
    row[24] = x_cur
    row[25] = pv_delivered
    row[26] = delta_E
    row[27] = x_e
    row[28] = soc_next
    row[29] = pr[0]
    row[30] = pr[1]
    row[31] = pr[2]
    row[32] = pr[3]
    row[33] = gross
    row[34] = penalty
    row[35] = F_e
    row[36] = F_as
    row[37] = C_deg
    row[38] = F_e + F_as - C_deg
    row[39] = act[0]
    row[40] = act[1]
    row[41] = act[2]
    row[42] = <double>fault
    return fault


cdef void mlp(const double* w, const cnp.int64_t* sizes, int n_layers, const double* x, double* out,
              double* buf_a, double* buf_b) nogil:
    cdef int layer, i, j, n_in, n_out
    cdef long off = 0
    cdef double z
    cdef const double* h = x
    cdef double* dst
    for layer in range(n_layers):
        n_in = sizes[layer]
        n_out = sizes[layer + 1]
        if layer == n_layers - 1:
            dst = out
        elif layer % 2 == 0:
            dst = buf_a
        else:
            dst = buf_b
        for i in range(n_out):
            z = w[off + n_in * n_out + i]
            for j in range(n_in):
                z += w[off + i * n_in + j] * h[j]
            if layer < n_layers - 1:
                dst[i] = tanh(z)
            else:
                dst[i] = 1.0 / (1.0 + exp(-z))
        off += n_in * n_out + n_out
        h = dst


def rollout_mlp(weights, sizes, obs_mean, obs_std, p_avail, p_pred, prices, activations, design,
                params_vec, double soc0, int mode):
    cdef const double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef const cnp.int64_t[::1] sz = np.ascontiguousarray(sizes, dtype=np.int64)
    cdef const double[::1] mean = np.ascontiguousarray(obs_mean, dtype=np.float64)
    cdef const double[::1] std = np.ascontiguousarray(obs_std, dtype=np.float64)
    cdef const double[::1] pa = np.ascontiguousarray(p_avail, dtype=np.float64)
    cdef const double[::1] pp = np.ascontiguousarray(p_pred, dtype=np.float64)
    cdef const double[:, ::1] pr = np.ascontiguousarray(prices, dtype=np.float64)
    cdef const double[:, ::1] ac = np.ascontiguousarray(activations, dtype=np.float64)
    cdef const double[::1] dv = np.ascontiguousarray(design, dtype=np.float64)
    cdef const double[::1] par = np.ascontiguousarray(params_vec, dtype=np.float64)
    cdef Py_ssize_t T = pp.shape[0]
    cdef int n_layers = sz.shape[0] - 1
    cdef int k
    cdef Py_ssize_t t
    if sz[0] != OBS_DIM or sz[n_layers] != 5:
        raise ValueError("policy must map %d observations to 5 actions" % OBS_DIM)
    for k in range(n_layers + 1):
        if sz[k] > MAX_WIDTH:
            raise ValueError("layer wider than %d" % MAX_WIDTH)
    trace_arr = np.zeros((T, N_COLS))
    obs_arr = np.zeros((T, OBS_DIM))
    cdef double[:, ::1] tr = trace_arr
    cdef double[:, ::1] ob = obs_arr
    cdef double xin[OBS_DIM]
    cdef double a[5]
    cdef double buf_a[MAX_WIDTH]
    cdef double buf_b[MAX_WIDTH]
    cdef double soc = soc0
    cdef int fault = 0
    with nogil:
        for t in range(T):
            ob[t, 0] = pa[t]
            ob[t, 1] = pr[t, 0]
            ob[t, 2] = pr[t, 1]
            ob[t, 3] = pr[t, 2]
            ob[t, 4] = pr[t, 3]
            ob[t, 5] = soc
            ob[t, 6] = dv[0]
            ob[t, 7] = dv[1]
            ob[t, 8] = dv[2]
            for k in range(OBS_DIM):
                xin[k] = (ob[t, k] - mean[k]) / std[k]
            mlp(&w[0], &sz[0], n_layers, xin, a, buf_a, buf_b)
            fault = fused_step(&tr[t, 0], soc, a, pp[t], pa[t + 1], &pr[t + 1, 0], &ac[t, 0],
                               dv[0], dv[1], dv[2], &par[0], mode)
            if fault:
                break
            soc = tr[t, 28]
    if fault:
        raise SocBoundError("soc %r out of bounds at step %d" % (tr[t, 28], t))
    return trace_arr, obs_arr


def step_batch(soc, actions, p_pred, p_avail, prices, activations, designs, params_vec, int mode):
    cdef const double[::1] s = np.ascontiguousarray(soc, dtype=np.float64)
    cdef const double[:, ::1] a = np.ascontiguousarray(actions, dtype=np.float64)
    cdef const double[::1] pp = np.ascontiguousarray(p_pred, dtype=np.float64)
    cdef const double[::1] pa = np.ascontiguousarray(p_avail, dtype=np.float64)
    cdef const double[:, ::1] pr = np.ascontiguousarray(prices, dtype=np.float64)
    cdef const double[:, ::1] ac = np.ascontiguousarray(activations, dtype=np.float64)
    cdef const double[:, ::1] dv = np.ascontiguousarray(designs, dtype=np.float64)
    cdef const double[::1] par = np.ascontiguousarray(params_vec, dtype=np.float64)
    cdef Py_ssize_t n = s.shape[0]
    cdef Py_ssize_t i
    out_arr = np.zeros((n, N_COLS))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(n):
            fused_step(&out[i, 0], s[i], &a[i, 0], pp[i], pa[i], &pr[i, 0], &ac[i, 0],
                       dv[i, 0], dv[i, 1], dv[i, 2], &par[0], mode)
    return out_arr
