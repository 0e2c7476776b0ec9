#!/usr/bin/env python3
"""Fit one-diode PV parameters to a target maximum power point.

Fixes the ideality factor, cell count and shunt resistance, then solves for
(I_phref, I_0, R_s) so that the module delivers I_mpp at V_mpp, dP/dV = 0
there, and the short-circuit current equals I_sc.
"""
import argparse

import numpy as np
from scipy.optimize import brentq, fsolve

K_B = 1.380649e-23
Q_E = 1.602176634e-19


def current(v, iph, i0, rs, rsh, vt):
    f = lambda i: iph - i0 * (np.exp((v + i * rs) / vt) - 1.0) - (v + i * rs) / rsh - i
    return brentq(f, -iph, 1.1 * iph + 1.0, xtol=1e-14)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--vmpp", type=float, default=36.75)
    ap.add_argument("--impp", type=float, default=29.0)
    ap.add_argument("--isc", type=float, default=30.9)
    ap.add_argument("--ncs", type=int, default=60)
    ap.add_argument("--gamma", type=float, default=1.3)
    ap.add_argument("--rsh", type=float, default=150.0)
    ap.add_argument("--temp", type=float, default=298.15)
    a = ap.parse_args()
    vt = a.ncs * K_B * a.temp * a.gamma / Q_E

    def eqs(p):
        iph, log_i0, rs = p
        i0 = np.exp(log_i0)
        e = np.exp((a.vmpp + a.impp * rs) / vt)
        r1 = iph - i0 * (e - 1.0) - (a.vmpp + a.impp * rs) / a.rsh - a.impp
        # implicit dI/dV at the MPP must equal -I/V
        g = i0 * e / vt + 1.0 / a.rsh
        didv = -g / (1.0 + g * rs)
        r2 = didv + a.impp / a.vmpp
        es = np.exp(a.isc * rs / vt)
        r3 = iph - i0 * (es - 1.0) - a.isc * rs / a.rsh - a.isc
        return [r1, r2, r3]

    iph, log_i0, rs = fsolve(eqs, [a.isc, np.log(1e-9), 0.1], xtol=1e-13)
    i0 = np.exp(log_i0)
    voc = brentq(lambda v: iph - i0 * (np.exp(v / vt) - 1.0) - v / a.rsh, 0.0, 200.0)
    vs = np.linspace(0.0, voc, 50001)
    ps = np.array([v * current(v, iph, i0, rs, a.rsh, vt) for v in vs])
    k = int(np.argmax(ps))
    print(f"I_phref = {iph:.12g}\nI_0 = {i0:.12g}\nR_s = {rs:.12g}\nR_sh = {a.rsh}")
    print(f"V_oc = {voc:.6g}")
    print(f"gamma = {a.gamma}\nN_cs = {a.ncs}")
    print(f"check: v_mpp={vs[k]:.4f} p_mpp={ps[k]:.3f} i={ps[k] / vs[k]:.4f}")


if __name__ == "__main__":
    main()
