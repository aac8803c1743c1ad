"""Compiled stepping kernel: the hot path of the simulator.

Same math as the reference implementation in `dynamics`, written as scalar
per-environment code and parallelized over the batch with numba. Every
environment executes a fixed instruction sequence, so results are
bit-identical regardless of batch size or thread count; the reference
backend stays the oracle in tests.
"""

from __future__ import annotations

import numpy as np
import numba
from numba import njit, prange

# pin the threading layer so numba does not probe (and warn about) TBB
numba.config.THREADING_LAYER = "omp"


@njit(parallel=True, cache=True)
def step_batch(
    base_pos, base_quat, base_linvel, base_angvel, q, qd, time_arr,
    anchor, active,
    targets, tau_ext,
    tau_out, fz_out, tang_out, speed_out, contact_out,
    parent, axis, offset, i6, mass, com,
    base_i6, base_mass, base_com,
    kp, kd, tau_lim, limit_k, limit_c, q_lo, q_hi,
    foot_bodies, corners,
    k_n, c_n, k_t, c_t, mu,
    gravity, dt, n_substeps, base_fixed, contact_on,
):
    n = q.shape[0]
    nb = q.shape[1]
    nc = corners.shape[0]

    for e in prange(n):
        # thread-local scratch, small enough to stay cache-hot
        rot = np.empty((nb, 3, 3))
        pos = np.empty((nb, 3))
        v = np.empty((nb, 6))
        cb = np.empty((nb, 6))
        xm = np.empty((nb, 6, 6))
        ia = np.empty((nb, 6, 6))
        pa = np.empty((nb, 6))
        fx = np.empty((nb, 6))
        uu = np.empty((nb, 6))
        dd = np.empty(nb)
        us = np.empty(nb)
        tau = np.empty(nb)
        acc = np.empty((nb, 6))
        vb = np.empty(6)
        iab = np.empty((6, 6))
        pab = np.empty(6)
        scratch = np.empty((6, 6))
        lu = np.empty((6, 6))
        sol = np.empty(6)
        ab = np.empty(6)

        for _ in range(n_substeps):
            # ---- joint torques: clamped PD plus joint-range springs
            for j in range(nb):
                t_act = kp[j] * (targets[e, j] - q[e, j]) - kd[j] * qd[e, j]
                if t_act > tau_lim[j]:
                    t_act = tau_lim[j]
                elif t_act < -tau_lim[j]:
                    t_act = -tau_lim[j]
                tau_out[e, j] = t_act
                t_full = t_act + tau_ext[e, j]
                over = q[e, j] - q_hi[j]
                under = q_lo[j] - q[e, j]
                if over > 0.0:
                    t_full += -limit_k[j] * over - limit_c[j] * qd[e, j]
                elif under > 0.0:
                    t_full += limit_k[j] * under - limit_c[j] * qd[e, j]
                tau[j] = t_full

            # ---- base rotation (body -> world) and spatial velocity
            w0 = base_quat[e, 0]
            x0 = base_quat[e, 1]
            y0 = base_quat[e, 2]
            z0 = base_quat[e, 3]
            r00 = 1.0 - 2.0 * (y0 * y0 + z0 * z0)
            r01 = 2.0 * (x0 * y0 - w0 * z0)
            r02 = 2.0 * (x0 * z0 + w0 * y0)
            r10 = 2.0 * (x0 * y0 + w0 * z0)
            r11 = 1.0 - 2.0 * (x0 * x0 + z0 * z0)
            r12 = 2.0 * (y0 * z0 - w0 * x0)
            r20 = 2.0 * (x0 * z0 - w0 * y0)
            r21 = 2.0 * (y0 * z0 + w0 * x0)
            r22 = 1.0 - 2.0 * (x0 * x0 + y0 * y0)

            vb[0] = base_angvel[e, 0]
            vb[1] = base_angvel[e, 1]
            vb[2] = base_angvel[e, 2]
            lx = base_linvel[e, 0]
            ly = base_linvel[e, 1]
            lz = base_linvel[e, 2]
            vb[3] = r00 * lx + r10 * ly + r20 * lz
            vb[4] = r01 * lx + r11 * ly + r21 * lz
            vb[5] = r02 * lx + r12 * ly + r22 * lz

            # ---- outward sweep: poses, velocities, joint transforms, gravity
            for i in range(nb):
                ci = np.cos(q[e, i])
                si = np.sin(q[e, i])
                ax0 = axis[i, 0]
                ax1 = axis[i, 1]
                ax2 = axis[i, 2]
                omc = 1.0 - ci
                j00 = ci + ax0 * ax0 * omc
                j01 = ax0 * ax1 * omc - ax2 * si
                j02 = ax0 * ax2 * omc + ax1 * si
                j10 = ax1 * ax0 * omc + ax2 * si
                j11 = ci + ax1 * ax1 * omc
                j12 = ax1 * ax2 * omc - ax0 * si
                j20 = ax2 * ax0 * omc - ax1 * si
                j21 = ax2 * ax1 * omc + ax0 * si
                j22 = ci + ax2 * ax2 * omc

                p = parent[i]
                if p < 0:
                    p00, p01, p02 = r00, r01, r02
                    p10, p11, p12 = r10, r11, r12
                    p20, p21, p22 = r20, r21, r22
                    bx = base_pos[e, 0]
                    by = base_pos[e, 1]
                    bz = base_pos[e, 2]
                    vp0 = vb[0]
                    vp1 = vb[1]
                    vp2 = vb[2]
                    vp3 = vb[3]
                    vp4 = vb[4]
                    vp5 = vb[5]
                else:
                    p00 = rot[p, 0, 0]
                    p01 = rot[p, 0, 1]
                    p02 = rot[p, 0, 2]
                    p10 = rot[p, 1, 0]
                    p11 = rot[p, 1, 1]
                    p12 = rot[p, 1, 2]
                    p20 = rot[p, 2, 0]
                    p21 = rot[p, 2, 1]
                    p22 = rot[p, 2, 2]
                    bx = pos[p, 0]
                    by = pos[p, 1]
                    bz = pos[p, 2]
                    vp0 = v[p, 0]
                    vp1 = v[p, 1]
                    vp2 = v[p, 2]
                    vp3 = v[p, 3]
                    vp4 = v[p, 4]
                    vp5 = v[p, 5]

                rot[i, 0, 0] = p00 * j00 + p01 * j10 + p02 * j20
                rot[i, 0, 1] = p00 * j01 + p01 * j11 + p02 * j21
                rot[i, 0, 2] = p00 * j02 + p01 * j12 + p02 * j22
                rot[i, 1, 0] = p10 * j00 + p11 * j10 + p12 * j20
                rot[i, 1, 1] = p10 * j01 + p11 * j11 + p12 * j21
                rot[i, 1, 2] = p10 * j02 + p11 * j12 + p12 * j22
                rot[i, 2, 0] = p20 * j00 + p21 * j10 + p22 * j20
                rot[i, 2, 1] = p20 * j01 + p21 * j11 + p22 * j21
                rot[i, 2, 2] = p20 * j02 + p21 * j12 + p22 * j22

                ox = offset[i, 0]
                oy = offset[i, 1]
                oz = offset[i, 2]
                pos[i, 0] = bx + p00 * ox + p01 * oy + p02 * oz
                pos[i, 1] = by + p10 * ox + p11 * oy + p12 * oz
                pos[i, 2] = bz + p20 * ox + p21 * oy + p22 * oz

                # X = [[E, 0], [-E rx, E]] with E = R_joint^T, r = offset
                e00, e01, e02 = j00, j10, j20
                e10, e11, e12 = j01, j11, j21
                e20, e21, e22 = j02, j12, j22
                xm[i, 0, 0] = e00
                xm[i, 0, 1] = e01
                xm[i, 0, 2] = e02
                xm[i, 0, 3] = 0.0
                xm[i, 0, 4] = 0.0
                xm[i, 0, 5] = 0.0
                xm[i, 1, 0] = e10
                xm[i, 1, 1] = e11
                xm[i, 1, 2] = e12
                xm[i, 1, 3] = 0.0
                xm[i, 1, 4] = 0.0
                xm[i, 1, 5] = 0.0
                xm[i, 2, 0] = e20
                xm[i, 2, 1] = e21
                xm[i, 2, 2] = e22
                xm[i, 2, 3] = 0.0
                xm[i, 2, 4] = 0.0
                xm[i, 2, 5] = 0.0
                xm[i, 3, 0] = -(e01 * oz - e02 * oy)
                xm[i, 3, 1] = -(e02 * ox - e00 * oz)
                xm[i, 3, 2] = -(e00 * oy - e01 * ox)
                xm[i, 3, 3] = e00
                xm[i, 3, 4] = e01
                xm[i, 3, 5] = e02
                xm[i, 4, 0] = -(e11 * oz - e12 * oy)
                xm[i, 4, 1] = -(e12 * ox - e10 * oz)
                xm[i, 4, 2] = -(e10 * oy - e11 * ox)
                xm[i, 4, 3] = e10
                xm[i, 4, 4] = e11
                xm[i, 4, 5] = e12
                xm[i, 5, 0] = -(e21 * oz - e22 * oy)
                xm[i, 5, 1] = -(e22 * ox - e20 * oz)
                xm[i, 5, 2] = -(e20 * oy - e21 * ox)
                xm[i, 5, 3] = e20
                xm[i, 5, 4] = e21
                xm[i, 5, 5] = e22

                for rr in range(6):
                    s = (
                        xm[i, rr, 0] * vp0
                        + xm[i, rr, 1] * vp1
                        + xm[i, rr, 2] * vp2
                        + xm[i, rr, 3] * vp3
                        + xm[i, rr, 4] * vp4
                        + xm[i, rr, 5] * vp5
                    )
                    v[i, rr] = s
                sq0 = ax0 * qd[e, i]
                sq1 = ax1 * qd[e, i]
                sq2 = ax2 * qd[e, i]
                v[i, 0] += sq0
                v[i, 1] += sq1
                v[i, 2] += sq2
                cb[i, 0] = v[i, 1] * sq2 - v[i, 2] * sq1
                cb[i, 1] = v[i, 2] * sq0 - v[i, 0] * sq2
                cb[i, 2] = v[i, 0] * sq1 - v[i, 1] * sq0
                cb[i, 3] = v[i, 4] * sq2 - v[i, 5] * sq1
                cb[i, 4] = v[i, 5] * sq0 - v[i, 3] * sq2
                cb[i, 5] = v[i, 3] * sq1 - v[i, 4] * sq0

                gx = -rot[i, 2, 0] * gravity * mass[i]
                gy = -rot[i, 2, 1] * gravity * mass[i]
                gz = -rot[i, 2, 2] * gravity * mass[i]
                fx[i, 3] = gx
                fx[i, 4] = gy
                fx[i, 5] = gz
                fx[i, 0] = com[i, 1] * gz - com[i, 2] * gy
                fx[i, 1] = com[i, 2] * gx - com[i, 0] * gz
                fx[i, 2] = com[i, 0] * gy - com[i, 1] * gx

            # ---- foot contacts (adds to the foot wrench)
            fz_out[e, 0] = 0.0
            fz_out[e, 1] = 0.0
            tang_out[e, 0] = 0.0
            tang_out[e, 1] = 0.0
            speed_out[e, 0] = 0.0
            speed_out[e, 1] = 0.0
            contact_out[e, 0] = False
            contact_out[e, 1] = False
            if foot_bodies[0] >= 0:
                for f in range(2):
                    b = foot_bodies[f]
                    wx = rot[b, 0, 0] * v[b, 0] + rot[b, 0, 1] * v[b, 1] + rot[b, 0, 2] * v[b, 2]
                    wy = rot[b, 1, 0] * v[b, 0] + rot[b, 1, 1] * v[b, 1] + rot[b, 1, 2] * v[b, 2]
                    wz = rot[b, 2, 0] * v[b, 0] + rot[b, 2, 1] * v[b, 1] + rot[b, 2, 2] * v[b, 2]
                    ux = rot[b, 0, 0] * v[b, 3] + rot[b, 0, 1] * v[b, 4] + rot[b, 0, 2] * v[b, 5]
                    uy = rot[b, 1, 0] * v[b, 3] + rot[b, 1, 1] * v[b, 4] + rot[b, 1, 2] * v[b, 5]
                    uz = rot[b, 2, 0] * v[b, 3] + rot[b, 2, 1] * v[b, 4] + rot[b, 2, 2] * v[b, 5]
                    speed_out[e, f] = ux * ux + uy * uy + uz * uz
                    if not contact_on:
                        continue
                    ftx = 0.0
                    fty = 0.0
                    for cidx in range(nc):
                        cxl = corners[cidx, 0]
                        cyl = corners[cidx, 1]
                        czl = corners[cidx, 2]
                        rxw = rot[b, 0, 0] * cxl + rot[b, 0, 1] * cyl + rot[b, 0, 2] * czl
                        ryw = rot[b, 1, 0] * cxl + rot[b, 1, 1] * cyl + rot[b, 1, 2] * czl
                        rzw = rot[b, 2, 0] * cxl + rot[b, 2, 1] * cyl + rot[b, 2, 2] * czl
                        pxw = pos[b, 0] + rxw
                        pyw = pos[b, 1] + ryw
                        pzw = pos[b, 2] + rzw
                        depth = -pzw
                        if depth > 0.0:
                            vcx = ux + wy * rzw - wz * ryw
                            vcy = uy + wz * rxw - wx * rzw
                            vcz = uz + wx * ryw - wy * rxw
                            fn = k_n * depth - c_n * vcz
                            if fn < 0.0:
                                fn = 0.0
                            if not active[e, f, cidx]:
                                anchor[e, f, cidx, 0] = pxw
                                anchor[e, f, cidx, 1] = pyw
                                active[e, f, cidx] = True
                            tx = -k_t * (pxw - anchor[e, f, cidx, 0]) - c_t * vcx
                            ty = -k_t * (pyw - anchor[e, f, cidx, 1]) - c_t * vcy
                            tn = np.sqrt(tx * tx + ty * ty)
                            cap = mu * fn
                            if tn > cap:
                                sc = cap / tn if tn > 1e-30 else 0.0
                                tx *= sc
                                ty *= sc
                                anchor[e, f, cidx, 0] = pxw + (tx + c_t * vcx) / k_t
                                anchor[e, f, cidx, 1] = pyw + (ty + c_t * vcy) / k_t
                            fz_out[e, f] += fn
                            ftx += tx
                            fty += ty
                            contact_out[e, f] = True
                            fbx = rot[b, 0, 0] * tx + rot[b, 1, 0] * ty + rot[b, 2, 0] * fn
                            fby = rot[b, 0, 1] * tx + rot[b, 1, 1] * ty + rot[b, 2, 1] * fn
                            fbz = rot[b, 0, 2] * tx + rot[b, 1, 2] * ty + rot[b, 2, 2] * fn
                            fx[b, 3] += fbx
                            fx[b, 4] += fby
                            fx[b, 5] += fbz
                            fx[b, 0] += cyl * fbz - czl * fby
                            fx[b, 1] += czl * fbx - cxl * fbz
                            fx[b, 2] += cxl * fby - cyl * fbx
                        else:
                            active[e, f, cidx] = False
                    tang_out[e, f] = np.sqrt(ftx * ftx + fty * fty)

            # ---- articulated-body algorithm: bias forces
            for i in range(nb):
                for rr in range(6):
                    hrr = 0.0
                    for cc in range(6):
                        ia[i, rr, cc] = i6[i, rr, cc]
                        hrr += i6[i, rr, cc] * v[i, cc]
                    acc[i, rr] = hrr
                h0, h1, h2 = acc[i, 0], acc[i, 1], acc[i, 2]
                h3, h4, h5 = acc[i, 3], acc[i, 4], acc[i, 5]
                pa[i, 0] = v[i, 1] * h2 - v[i, 2] * h1 + v[i, 4] * h5 - v[i, 5] * h4 - fx[i, 0]
                pa[i, 1] = v[i, 2] * h0 - v[i, 0] * h2 + v[i, 5] * h3 - v[i, 3] * h5 - fx[i, 1]
                pa[i, 2] = v[i, 0] * h1 - v[i, 1] * h0 + v[i, 3] * h4 - v[i, 4] * h3 - fx[i, 2]
                pa[i, 3] = v[i, 1] * h5 - v[i, 2] * h4 - fx[i, 3]
                pa[i, 4] = v[i, 2] * h3 - v[i, 0] * h5 - fx[i, 4]
                pa[i, 5] = v[i, 0] * h4 - v[i, 1] * h3 - fx[i, 5]

            gbx = -r20 * gravity * base_mass
            gby = -r21 * gravity * base_mass
            gbz = -r22 * gravity * base_mass
            for rr in range(6):
                hrr = 0.0
                for cc in range(6):
                    iab[rr, cc] = base_i6[rr, cc]
                    hrr += base_i6[rr, cc] * vb[cc]
                sol[rr] = hrr
            h0, h1, h2 = sol[0], sol[1], sol[2]
            h3, h4, h5 = sol[3], sol[4], sol[5]
            pab[0] = vb[1] * h2 - vb[2] * h1 + vb[4] * h5 - vb[5] * h4 - (base_com[1] * gbz - base_com[2] * gby)
            pab[1] = vb[2] * h0 - vb[0] * h2 + vb[5] * h3 - vb[3] * h5 - (base_com[2] * gbx - base_com[0] * gbz)
            pab[2] = vb[0] * h1 - vb[1] * h0 + vb[3] * h4 - vb[4] * h3 - (base_com[0] * gby - base_com[1] * gbx)
            pab[3] = vb[1] * h5 - vb[2] * h4 - gbx
            pab[4] = vb[2] * h3 - vb[0] * h5 - gby
            pab[5] = vb[0] * h4 - vb[1] * h3 - gbz

            # ---- inward sweep
            for i in range(nb - 1, -1, -1):
                ax0 = axis[i, 0]
                ax1 = axis[i, 1]
                ax2 = axis[i, 2]
                for rr in range(6):
                    uu[i, rr] = ia[i, rr, 0] * ax0 + ia[i, rr, 1] * ax1 + ia[i, rr, 2] * ax2
                d_aug = dt * (kd[i] + dt * kp[i])
                if q[e, i] > q_hi[i] or q[e, i] < q_lo[i]:
                    d_aug += dt * (limit_c[i] + dt * limit_k[i])
                dd[i] = uu[i, 0] * ax0 + uu[i, 1] * ax1 + uu[i, 2] * ax2 + d_aug
                us[i] = tau[i] - (pa[i, 0] * ax0 + pa[i, 1] * ax1 + pa[i, 2] * ax2)
                dinv = 1.0 / dd[i]
                # scratch = Ia' ; sol = pa'
                for rr in range(6):
                    prr = pa[i, rr] + uu[i, rr] * us[i] * dinv
                    for cc in range(6):
                        iacc = ia[i, rr, cc] - uu[i, rr] * uu[i, cc] * dinv
                        scratch[rr, cc] = iacc
                        prr += iacc * cb[i, cc]
                    sol[rr] = prr
                # reuse ia[i] as tmp = Ia' X
                for rr in range(6):
                    for cc in range(6):
                        sacc = 0.0
                        for kk in range(6):
                            sacc += scratch[rr, kk] * xm[i, kk, cc]
                        ia[i, rr, cc] = sacc
                p = parent[i]
                if p < 0:
                    for rr in range(6):
                        racc = 0.0
                        for kk in range(6):
                            racc += xm[i, kk, rr] * sol[kk]
                        pab[rr] += racc
                        for cc in range(6):
                            sacc = 0.0
                            for kk in range(6):
                                sacc += xm[i, kk, rr] * ia[i, kk, cc]
                            iab[rr, cc] += sacc
                else:
                    for rr in range(6):
                        racc = 0.0
                        for kk in range(6):
                            racc += xm[i, kk, rr] * sol[kk]
                        pa[p, rr] += racc
                        for cc in range(6):
                            sacc = 0.0
                            for kk in range(6):
                                sacc += xm[i, kk, rr] * ia[i, kk, cc]
                            ia[p, rr, cc] += sacc

            # ---- base acceleration
            if base_fixed:
                for rr in range(6):
                    ab[rr] = 0.0
            else:
                for rr in range(6):
                    sol[rr] = -pab[rr]
                    for cc in range(6):
                        lu[rr, cc] = iab[rr, cc]
                # 6x6 Gaussian elimination with partial pivoting
                for colp in range(6):
                    piv = colp
                    best = abs(lu[colp, colp])
                    for r2 in range(colp + 1, 6):
                        mag = abs(lu[r2, colp])
                        if mag > best:
                            best = mag
                            piv = r2
                    if piv != colp:
                        for c2 in range(6):
                            tmpv = lu[colp, c2]
                            lu[colp, c2] = lu[piv, c2]
                            lu[piv, c2] = tmpv
                        tmpv = sol[colp]
                        sol[colp] = sol[piv]
                        sol[piv] = tmpv
                    dinv = 1.0 / lu[colp, colp]
                    for r2 in range(colp + 1, 6):
                        fmult = lu[r2, colp] * dinv
                        if fmult != 0.0:
                            for c2 in range(colp, 6):
                                lu[r2, c2] -= fmult * lu[colp, c2]
                            sol[r2] -= fmult * sol[colp]
                for r2 in range(5, -1, -1):
                    accv = sol[r2]
                    for c2 in range(r2 + 1, 6):
                        accv -= lu[r2, c2] * ab[c2]
                    ab[r2] = accv / lu[r2, r2]

            # ---- outward acceleration sweep
            for i in range(nb):
                p = parent[i]
                for rr in range(6):
                    s = cb[i, rr]
                    if p < 0:
                        s += (
                            xm[i, rr, 0] * ab[0]
                            + xm[i, rr, 1] * ab[1]
                            + xm[i, rr, 2] * ab[2]
                            + xm[i, rr, 3] * ab[3]
                            + xm[i, rr, 4] * ab[4]
                            + xm[i, rr, 5] * ab[5]
                        )
                    else:
                        s += (
                            xm[i, rr, 0] * acc[p, 0]
                            + xm[i, rr, 1] * acc[p, 1]
                            + xm[i, rr, 2] * acc[p, 2]
                            + xm[i, rr, 3] * acc[p, 3]
                            + xm[i, rr, 4] * acc[p, 4]
                            + xm[i, rr, 5] * acc[p, 5]
                        )
                    acc[i, rr] = s
                qddi = (
                    us[i]
                    - (
                        uu[i, 0] * acc[i, 0]
                        + uu[i, 1] * acc[i, 1]
                        + uu[i, 2] * acc[i, 2]
                        + uu[i, 3] * acc[i, 3]
                        + uu[i, 4] * acc[i, 4]
                        + uu[i, 5] * acc[i, 5]
                    )
                ) / dd[i]
                acc[i, 0] += axis[i, 0] * qddi
                acc[i, 1] += axis[i, 1] * qddi
                acc[i, 2] += axis[i, 2] * qddi
                # semi-implicit: joint velocity first, then position
                qd[e, i] += dt * qddi
                q[e, i] += dt * qd[e, i]

            if not base_fixed:
                for rr in range(6):
                    vb[rr] += dt * ab[rr]
                base_angvel[e, 0] = vb[0]
                base_angvel[e, 1] = vb[1]
                base_angvel[e, 2] = vb[2]
                nlx = r00 * vb[3] + r01 * vb[4] + r02 * vb[5]
                nly = r10 * vb[3] + r11 * vb[4] + r12 * vb[5]
                nlz = r20 * vb[3] + r21 * vb[4] + r22 * vb[5]
                base_linvel[e, 0] = nlx
                base_linvel[e, 1] = nly
                base_linvel[e, 2] = nlz
                base_pos[e, 0] += dt * nlx
                base_pos[e, 1] += dt * nly
                base_pos[e, 2] += dt * nlz
                # integrate quaternion from the body angular velocity
                wmag = np.sqrt(vb[0] * vb[0] + vb[1] * vb[1] + vb[2] * vb[2])
                half = 0.5 * wmag * dt
                if wmag > 1e-30:
                    sw = np.sin(half) / wmag
                else:
                    sw = 0.0
                dw = np.cos(half)
                dx = vb[0] * sw
                dy = vb[1] * sw
                dz = vb[2] * sw
                nw = w0 * dw - x0 * dx - y0 * dy - z0 * dz
                nx = w0 * dx + x0 * dw + y0 * dz - z0 * dy
                ny = w0 * dy - x0 * dz + y0 * dw + z0 * dx
                nz = w0 * dz + x0 * dy - y0 * dx + z0 * dw
                qn = np.sqrt(nw * nw + nx * nx + ny * ny + nz * nz)
                base_quat[e, 0] = nw / qn
                base_quat[e, 1] = nx / qn
                base_quat[e, 2] = ny / qn
                base_quat[e, 3] = nz / qn

            time_arr[e] += dt
