"""Hot numeric kernels.

Everything here is written in nopython-compatible numpy so the same source
runs JIT-compiled (default) or interpreted when ``BELTFORGE_NUMBA=0``.
Kernels take plain float64/int64 arrays; validation and object plumbing live
in the calling modules.
"""

import numpy as np

from .backend import maybe_njit

# Obstacle type codes used in the packed (n_obs, 7) parameter matrix.
OBS_SPHERE = 0  # row: cx, cy, cz, radius, -, -, -
OBS_BOX = 1     # row: cx, cy, cz, hx, hy, hz, -
OBS_CAPSULE = 2 # row: p0x, p0y, p0z, p1x, p1y, p1z, radius


# ---------------------------------------------------------------------------
# Hunt-Crossley belt force
# ---------------------------------------------------------------------------

@maybe_njit(cache=True)
def hc_force_array(k, beta, lam, x, xdot, out):
    """Clamped contact force k*x^beta + lam*x^beta*xdot, floored at 0."""
    for i in range(x.shape[0]):
        xb = x[i] ** beta
        f = k * xb + lam * xb * xdot[i]
        out[i] = f if f > 0.0 else 0.0


@maybe_njit(cache=True)
def hc_residual_jacobian(k, beta, lam, x, xdot, f_obs, res, jac):
    """Residuals (model - data) and analytic Jacobian wrt (k, beta, lam).

    The beta derivative carries a log(x) factor; it is defined as 0 at x = 0
    so the row stays finite.
    """
    for i in range(x.shape[0]):
        xi = x[i]
        xb = xi ** beta
        res[i] = k * xb + lam * xb * xdot[i] - f_obs[i]
        jac[i, 0] = xb
        if xi > 0.0:
            jac[i, 1] = (k + lam * xdot[i]) * xb * np.log(xi)
        else:
            jac[i, 1] = 0.0
        jac[i, 2] = xb * xdot[i]


# ---------------------------------------------------------------------------
# Serial-chain kinematics (standard DH rows: a, d, alpha, theta_offset)
# ---------------------------------------------------------------------------

@maybe_njit(cache=True)
def dh_frames(dh, q):
    """Base-frame transforms of every link frame: (n_joints+1, 4, 4).

    frames[0] is the base (identity), frames[i] the frame after joint i.
    """
    nj = dh.shape[0]
    frames = np.empty((nj + 1, 4, 4))
    T = np.eye(4)
    frames[0] = T
    for i in range(nj):
        a = dh[i, 0]
        d = dh[i, 1]
        ca = np.cos(dh[i, 2])
        sa = np.sin(dh[i, 2])
        th = q[i] + dh[i, 3]
        ct = np.cos(th)
        st = np.sin(th)
        Ti = np.empty((4, 4))
        Ti[0, 0] = ct
        Ti[0, 1] = -st * ca
        Ti[0, 2] = st * sa
        Ti[0, 3] = a * ct
        Ti[1, 0] = st
        Ti[1, 1] = ct * ca
        Ti[1, 2] = -ct * sa
        Ti[1, 3] = a * st
        Ti[2, 0] = 0.0
        Ti[2, 1] = sa
        Ti[2, 2] = ca
        Ti[2, 3] = d
        Ti[3, 0] = 0.0
        Ti[3, 1] = 0.0
        Ti[3, 2] = 0.0
        Ti[3, 3] = 1.0
        T = np.dot(np.ascontiguousarray(T), Ti)
        frames[i + 1] = T
    return frames


@maybe_njit(cache=True)
def point_jacobian_frames(frames, link, p, out):
    """Position Jacobian of a point rigidly attached to ``link``.

    Joint i (column i) rotates about the z axis of frames[i]; columns for
    joints past the attachment link are zero. ``out`` is (3, n_joints).
    """
    nj = frames.shape[0] - 1
    for col in range(nj):
        if col < link:
            zx = frames[col, 0, 2]
            zy = frames[col, 1, 2]
            zz = frames[col, 2, 2]
            rx = p[0] - frames[col, 0, 3]
            ry = p[1] - frames[col, 1, 3]
            rz = p[2] - frames[col, 2, 3]
            out[0, col] = zy * rz - zz * ry
            out[1, col] = zz * rx - zx * rz
            out[2, col] = zx * ry - zy * rx
        else:
            out[0, col] = 0.0
            out[1, col] = 0.0
            out[2, col] = 0.0


@maybe_njit(cache=True)
def ee_batch(dh, qpath):
    """End-effector transform and position Jacobian at every waypoint."""
    tn = qpath.shape[0]
    nj = dh.shape[0]
    ee = np.empty((tn, 4, 4))
    jac = np.empty((tn, 3, nj))
    for t in range(tn):
        frames = dh_frames(dh, qpath[t])
        ee[t] = frames[nj]
        point_jacobian_frames(frames, nj, frames[nj, :3, 3], jac[t])
    return ee, jac


@maybe_njit(cache=True)
def point_obstacle_distance(p, kind, row, normal):
    """Signed distance from a point to one solid primitive.

    Negative inside. ``normal`` (out, length 3) is the direction of steepest
    distance increase; degenerate cases fall back to +z.
    """
    if kind == OBS_SPHERE:
        dx = p[0] - row[0]
        dy = p[1] - row[1]
        dz = p[2] - row[2]
        dist = np.sqrt(dx * dx + dy * dy + dz * dz)
        if dist > 1e-12:
            normal[0] = dx / dist
            normal[1] = dy / dist
            normal[2] = dz / dist
        else:
            normal[0] = 0.0
            normal[1] = 0.0
            normal[2] = 1.0
        return dist - row[3]
    elif kind == OBS_BOX:
        qx = p[0] - row[0]
        qy = p[1] - row[1]
        qz = p[2] - row[2]
        ex = abs(qx) - row[3]
        ey = abs(qy) - row[4]
        ez = abs(qz) - row[5]
        ox = ex if ex > 0.0 else 0.0
        oy = ey if ey > 0.0 else 0.0
        oz = ez if ez > 0.0 else 0.0
        outside = np.sqrt(ox * ox + oy * oy + oz * oz)
        if outside > 0.0:
            normal[0] = (ox / outside) * (1.0 if qx >= 0.0 else -1.0)
            normal[1] = (oy / outside) * (1.0 if qy >= 0.0 else -1.0)
            normal[2] = (oz / outside) * (1.0 if qz >= 0.0 else -1.0)
            return outside
        # Inside: distance to the nearest face, normal along that face axis.
        normal[0] = 0.0
        normal[1] = 0.0
        normal[2] = 0.0
        if ex >= ey and ex >= ez:
            normal[0] = 1.0 if qx >= 0.0 else -1.0
            return ex
        elif ey >= ez:
            normal[1] = 1.0 if qy >= 0.0 else -1.0
            return ey
        else:
            normal[2] = 1.0 if qz >= 0.0 else -1.0
            return ez
    else:  # OBS_CAPSULE
        ux = row[3] - row[0]
        uy = row[4] - row[1]
        uz = row[5] - row[2]
        wx = p[0] - row[0]
        wy = p[1] - row[1]
        wz = p[2] - row[2]
        seg2 = ux * ux + uy * uy + uz * uz
        s = 0.0
        if seg2 > 1e-18:
            s = (wx * ux + wy * uy + wz * uz) / seg2
            if s < 0.0:
                s = 0.0
            elif s > 1.0:
                s = 1.0
        dx = wx - s * ux
        dy = wy - s * uy
        dz = wz - s * uz
        dist = np.sqrt(dx * dx + dy * dy + dz * dz)
        if dist > 1e-12:
            normal[0] = dx / dist
            normal[1] = dy / dist
            normal[2] = dz / dist
        else:
            normal[0] = 0.0
            normal[1] = 0.0
            normal[2] = 1.0
        return dist - row[6]


@maybe_njit(cache=True)
def collision_batch(dh, qpath, sph_frame, sph_local, sph_radius, obs_kind, obs_data):
    """Signed distances, contact normals and sphere-center Jacobians.

    Shapes: sd (T, n_sph, n_obs), normals (..., 3), jac (T, n_sph, 3, nj),
    centers (T, n_sph, 3). Signed distance is point-to-primitive minus the
    sphere radius.
    """
    tn = qpath.shape[0]
    ns = sph_frame.shape[0]
    no = obs_kind.shape[0]
    nj = dh.shape[0]
    sd = np.empty((tn, ns, no))
    normals = np.empty((tn, ns, no, 3))
    jac = np.empty((tn, ns, 3, nj))
    centers = np.empty((tn, ns, 3))
    for t in range(tn):
        frames = dh_frames(dh, qpath[t])
        for s in range(ns):
            f = sph_frame[s]
            for r in range(3):
                centers[t, s, r] = (
                    frames[f, r, 0] * sph_local[s, 0]
                    + frames[f, r, 1] * sph_local[s, 1]
                    + frames[f, r, 2] * sph_local[s, 2]
                    + frames[f, r, 3]
                )
            point_jacobian_frames(frames, f, centers[t, s], jac[t, s])
            for o in range(no):
                sd[t, s, o] = (
                    point_obstacle_distance(
                        centers[t, s], obs_kind[o], obs_data[o], normals[t, s, o]
                    )
                    - sph_radius[s]
                )
    return sd, normals, jac, centers


# ---------------------------------------------------------------------------
# Box-constrained QP with l1 hinge penalties (convex subproblem solver)
# ---------------------------------------------------------------------------
# minimize  0.5 x'Px + c'x + sum_i mu_i * hinge_eps(A_i x + b_i)
# subject to lo <= x <= hi,
# where hinge_eps is the Huber-smoothed hinge: 0 for u<=0, u^2/(2 eps) on
# [0, eps], u - eps/2 beyond. Exact cyclic coordinate minimization; the 1D
# subproblem derivative is piecewise linear and monotone, so the minimizer is
# found by a breakpoint scan. P and A arrive as compressed sparse columns
# (both matrices are structurally sparse: the path Hessian is block
# tridiagonal and each constraint row touches one or two waypoints).


@maybe_njit(cache=True)
def _hinge_dphi_sparse(pjj, gj, rows, vals, p0, p1, r, mu, eps, delta):
    """Derivative of the 1D coordinate objective at offset ``delta``."""
    val = pjj * delta + gj
    for p in range(p0, p1):
        a = vals[p]
        i = rows[p]
        if mu[i] == 0.0:
            continue
        u = r[i] + a * delta
        if u <= 0.0:
            continue
        if u >= eps:
            val += mu[i] * a
        else:
            val += mu[i] * (u / eps) * a
    return val


@maybe_njit(cache=True)
def qp_hinge_cd(pcp, pri, pval, pdiag, c, acp, ari, aval, b, mu,
                lo, hi, x0, eps, max_sweeps, tol):
    """Coordinate-descent solve; returns (x, sweeps_used, max_last_move)."""
    n = c.shape[0]
    m = b.shape[0]
    x = x0.copy()
    # residuals r = A x + b and smooth gradient g = P x + c
    r = b.copy()
    g = c.copy()
    for j in range(n):
        xj = x[j]
        if xj != 0.0:
            for p in range(acp[j], acp[j + 1]):
                r[ari[p]] += aval[p] * xj
            for p in range(pcp[j], pcp[j + 1]):
                g[pri[p]] += pval[p] * xj
    bp = np.empty(2 * m + 2)
    sweeps = 0
    move = 0.0
    for sweep in range(max_sweeps):
        sweeps = sweep + 1
        move = 0.0
        for j in range(n):
            dlo = lo[j] - x[j]
            dhi = hi[j] - x[j]
            if dhi - dlo < 1e-300:
                continue
            pjj = pdiag[j]
            gj = g[j]
            a0 = acp[j]
            a1 = acp[j + 1]
            dlo_val = _hinge_dphi_sparse(pjj, gj, ari, aval, a0, a1, r, mu, eps, dlo)
            if dlo_val >= 0.0:
                d = dlo
            else:
                dhi_val = _hinge_dphi_sparse(pjj, gj, ari, aval, a0, a1, r, mu, eps, dhi)
                if dhi_val <= 0.0:
                    d = dhi
                else:
                    # collect hinge breakpoints inside (dlo, dhi)
                    nb = 0
                    bp[nb] = dlo
                    nb += 1
                    for p in range(a0, a1):
                        a = aval[p]
                        i = ari[p]
                        if a == 0.0 or mu[i] == 0.0:
                            continue
                        t0 = -r[i] / a
                        if dlo < t0 < dhi:
                            bp[nb] = t0
                            nb += 1
                        t1 = (eps - r[i]) / a
                        if dlo < t1 < dhi:
                            bp[nb] = t1
                            nb += 1
                    bp[nb] = dhi
                    nb += 1
                    seg = np.sort(bp[:nb])
                    # scan for the sign change of the monotone derivative
                    d = dhi
                    fprev = dlo_val
                    for kseg in range(1, nb):
                        fnext = _hinge_dphi_sparse(pjj, gj, ari, aval, a0, a1,
                                                   r, mu, eps, seg[kseg])
                        if fnext >= 0.0:
                            denom = fnext - fprev
                            if denom > 1e-300:
                                d = seg[kseg - 1] - fprev * (seg[kseg] - seg[kseg - 1]) / denom
                            else:
                                d = seg[kseg - 1]
                            break
                        fprev = fnext
            if d != 0.0:
                x[j] += d
                for p in range(pcp[j], pcp[j + 1]):
                    g[pri[p]] += pval[p] * d
                for p in range(acp[j], acp[j + 1]):
                    r[ari[p]] += aval[p] * d
                ad = abs(d)
                if ad > move:
                    move = ad
        if move < tol:
            break
    return x, sweeps, move


def csc_from_dense(mat):
    """Compressed-sparse-column arrays (colptr, rowidx, values) of a matrix."""
    m, n = mat.shape
    colptr = np.zeros(n + 1, dtype=np.int64)
    rows_list = []
    vals_list = []
    for j in range(n):
        nz = np.nonzero(mat[:, j])[0]
        colptr[j + 1] = colptr[j] + nz.shape[0]
        rows_list.append(nz.astype(np.int64))
        vals_list.append(mat[nz, j])
    if rows_list:
        rowidx = np.concatenate(rows_list)
        values = np.concatenate(vals_list)
    else:  # pragma: no cover - zero-column matrix
        rowidx = np.zeros(0, dtype=np.int64)
        values = np.zeros(0)
    return colptr, rowidx, values


# ---------------------------------------------------------------------------
# Feedforward policy network (tanh hidden layers, linear output)
# ---------------------------------------------------------------------------
# Parameters live in one flat vector: per layer, row-major W (din, dout)
# followed by the bias (dout,).


@maybe_njit(cache=True)
def mlp_predict(theta, dims, x):
    """Batched forward pass; x is (n, dims[0]), returns (n, dims[-1])."""
    nlayers = dims.shape[0] - 1
    a = np.ascontiguousarray(x)
    off = 0
    for layer in range(nlayers):
        din = dims[layer]
        dout = dims[layer + 1]
        w = theta[off:off + din * dout].reshape(din, dout)
        off += din * dout
        bias = theta[off:off + dout]
        off += dout
        z = np.dot(a, w) + bias
        if layer < nlayers - 1:
            a = np.tanh(z)
        else:
            a = z
    return a


@maybe_njit(cache=True)
def mlp_loss_grad(theta, dims, x, y, grad):
    """MSE loss over all samples/output dims; analytic gradient into ``grad``."""
    nlayers = dims.shape[0] - 1
    offs = np.empty(nlayers, np.int64)
    off = 0
    for layer in range(nlayers):
        offs[layer] = off
        off += dims[layer] * dims[layer + 1] + dims[layer + 1]
    acts = [np.ascontiguousarray(x)]
    for layer in range(nlayers):
        din = dims[layer]
        dout = dims[layer + 1]
        w = theta[offs[layer]:offs[layer] + din * dout].reshape(din, dout)
        bias = theta[offs[layer] + din * dout:offs[layer] + din * dout + dout]
        z = np.dot(acts[layer], w) + bias
        if layer < nlayers - 1:
            acts.append(np.tanh(z))
        else:
            acts.append(z)
    pred = acts[nlayers]
    n = pred.shape[0]
    dout_last = pred.shape[1]
    err = pred - y
    loss = 0.0
    for i in range(n):
        for j in range(dout_last):
            loss += err[i, j] * err[i, j]
    denom = float(n * dout_last)
    loss /= denom
    delta = err * (2.0 / denom)
    for layer in range(nlayers - 1, -1, -1):
        din = dims[layer]
        dout = dims[layer + 1]
        base = offs[layer]
        w = theta[base:base + din * dout].reshape(din, dout)
        gw = np.dot(np.ascontiguousarray(acts[layer].T), delta)
        gwf = gw.reshape(din * dout)
        for t in range(din * dout):
            grad[base + t] = gwf[t]
        for k in range(dout):
            acc = 0.0
            for i in range(delta.shape[0]):
                acc += delta[i, k]
            grad[base + din * dout + k] = acc
        if layer > 0:
            back = np.dot(delta, np.ascontiguousarray(w.T))
            h = acts[layer]
            delta = back * (1.0 - h * h)
    return loss


@maybe_njit(cache=True)
def adam_step(theta, grad, mom, vel, step, lr, beta1, beta2, eps):
    """In-place Adam-style update (momentum + per-parameter scaling)."""
    bc1 = 1.0 - beta1 ** step
    bc2 = 1.0 - beta2 ** step
    for i in range(theta.shape[0]):
        mom[i] = beta1 * mom[i] + (1.0 - beta1) * grad[i]
        vel[i] = beta2 * vel[i] + (1.0 - beta2) * grad[i] * grad[i]
        theta[i] -= lr * (mom[i] / bc1) / (np.sqrt(vel[i] / bc2) + eps)


@maybe_njit(cache=True)
def mlp_train_epoch(theta, mom, vel, step0, dims, x, y, perm, batch_size,
                    lr, beta1, beta2, adam_eps, grad):
    """One shuffled epoch of minibatch updates; returns (epoch_loss, step)."""
    n = x.shape[0]
    dout = y.shape[1]
    step = step0
    sse = 0.0
    start = 0
    while start < n:
        end = start + batch_size
        if end > n:
            end = n
        idx = perm[start:end]
        xb = x[idx]
        yb = y[idx]
        loss = mlp_loss_grad(theta, dims, xb, yb, grad)
        step += 1
        adam_step(theta, grad, mom, vel, step, lr, beta1, beta2, adam_eps)
        sse += loss * (end - start) * dout
        start = end
    return sse / (n * dout), step
