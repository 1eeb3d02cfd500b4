"""Planar 5-link biped: minimal-coordinate dynamics with penalty ground contact.

Coordinates ``q = (x, z, pitch, hip_l, knee_l, hip_r, knee_r)``; ``(x, z)`` is
the hip point, pitch is the torso angle from vertical (positive leans
forward), hips are measured from the torso and knees from the thigh.
Absolute link angles are therefore linear in ``q`` (rows of ``ANGLE_MAP``).
The torso points up along ``(sin a, cos a)`` and leg links point down along
``(-sin a, -cos a)``, so every angle turns the same way and a hip or knee
torque is a true internal torque between neighbouring links.

The mass matrix is assembled from centre-of-mass Jacobians,
``M = sum m J^T J + I w w^T``; the velocity-product term of every point is
``-sum c d(a) a_dot^2`` because each point is a sum of rotating unit vectors.

Model parameters travel as one float64 array (``P_*`` indices) so the
numba kernels need no objects.  Everything here is a ``kernel``: compiled
with numba when available, plain Python otherwise.
"""

import numpy as np

from walknav._accel import kernel

NQ = 7
P_M_TORSO, P_L_TORSO, P_M_THIGH, P_L_THIGH, P_M_SHANK, P_L_SHANK = range(6)
P_G, P_K_GROUND, P_C_GROUND, P_MU = 6, 7, 8, 9
P_KP_HIP, P_KD_HIP, P_KP_KNEE, P_KD_KNEE, P_TAU_MAX = 10, 11, 12, 13, 14
N_PARAMS = 15

# link angles: torso, left thigh, left shank, right thigh, right shank
ANGLE_MAP = np.array([
    [0, 0, 1, 0, 0, 0, 0],
    [0, 0, 1, 1, 0, 0, 0],
    [0, 0, 1, 1, 1, 0, 0],
    [0, 0, 1, 0, 0, 1, 0],
    [0, 0, 1, 0, 0, 1, 1],
], dtype=np.float64)

# points: 5 link centres of mass, then left foot, right foot
N_LINKS = 5
FOOT_L, FOOT_R = 5, 6

# aux output of simulate(): mean contact forces, mean torques, cone excess, min normal
AUX_FN_L, AUX_FT_L, AUX_FN_R, AUX_FT_R = 0, 1, 2, 3
AUX_TAU = 4            # 4..7
AUX_CONE_EXCESS = 8
AUX_MIN_NORMAL = 9
N_AUX = 10


@kernel
def point_coeffs(P):
    """(7, 5) lever lengths of every tracked point along each link direction."""
    lt, l1, l2 = P[P_L_TORSO], P[P_L_THIGH], P[P_L_SHANK]
    C = np.zeros((7, 5))
    C[0, 0] = 0.5 * lt
    C[1, 1] = 0.5 * l1
    C[2, 1] = l1
    C[2, 2] = 0.5 * l2
    C[3, 3] = 0.5 * l1
    C[4, 3] = l1
    C[4, 4] = 0.5 * l2
    C[5, 1] = l1
    C[5, 2] = l2
    C[6, 3] = l1
    C[6, 4] = l2
    return C


@kernel
def link_masses(P):
    m = np.empty(5)
    m[0] = P[P_M_TORSO]
    m[1] = P[P_M_THIGH]
    m[2] = P[P_M_SHANK]
    m[3] = P[P_M_THIGH]
    m[4] = P[P_M_SHANK]
    return m


@kernel
def link_inertias(P):
    m = link_masses(P)
    out = np.empty(5)
    out[0] = m[0] * P[P_L_TORSO] ** 2 / 12.0
    out[1] = m[1] * P[P_L_THIGH] ** 2 / 12.0
    out[2] = m[2] * P[P_L_SHANK] ** 2 / 12.0
    out[3] = out[1]
    out[4] = out[2]
    return out


@kernel
def _directions(q):
    """Unit direction, its derivative, and the angle of every link."""
    D = np.empty((5, 2))
    Dp = np.empty((5, 2))
    for k in range(5):
        a = 0.0
        for j in range(NQ):
            a += ANGLE_MAP[k, j] * q[j]
        s, c = np.sin(a), np.cos(a)
        if k == 0:
            D[k, 0], D[k, 1] = s, c
            Dp[k, 0], Dp[k, 1] = c, -s
        else:
            D[k, 0], D[k, 1] = -s, -c
            Dp[k, 0], Dp[k, 1] = -c, s
    return D, Dp


@kernel
def kinematics(q, qd, P):
    """Positions (7, 2), Jacobians (7, 2, 7) and velocity-product terms (7, 2) of all points."""
    C = point_coeffs(P)
    D, Dp = _directions(q)
    w = np.zeros(5)
    for k in range(5):
        for j in range(NQ):
            w[k] += ANGLE_MAP[k, j] * qd[j]
    pos = np.zeros((7, 2))
    J = np.zeros((7, 2, NQ))
    Jdqd = np.zeros((7, 2))
    for r in range(7):
        pos[r, 0] = q[0]
        pos[r, 1] = q[1]
        J[r, 0, 0] = 1.0
        J[r, 1, 1] = 1.0
        for k in range(5):
            c = C[r, k]
            if c == 0.0:
                continue
            for i in range(2):
                pos[r, i] += c * D[k, i]
                Jdqd[r, i] -= c * D[k, i] * w[k] * w[k]
                for j in range(NQ):
                    J[r, i, j] += c * Dp[k, i] * ANGLE_MAP[k, j]
    return pos, J, Jdqd


@kernel
def mass_matrix(q, P):
    _, J, _ = kinematics(q, np.zeros(NQ), P)
    m = link_masses(P)
    inertia = link_inertias(P)
    M = np.zeros((NQ, NQ))
    for r in range(N_LINKS):
        for a in range(NQ):
            for b in range(NQ):
                M[a, b] += m[r] * (J[r, 0, a] * J[r, 0, b] + J[r, 1, a] * J[r, 1, b])
                M[a, b] += inertia[r] * ANGLE_MAP[r, a] * ANGLE_MAP[r, b]
    return M


@kernel
def cholesky_solve(M, b):
    """Solve ``M x = b`` for symmetric positive definite ``M``."""
    n = M.shape[0]
    L = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            s = M[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                L[i, i] = np.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    y = np.zeros(n)
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * y[k]
        y[i] = s / L[i, i]
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, n):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]
    return x


@kernel
def contact_forces(pos, vel, anchor, P):
    """Normal/tangential force on each foot; updates the friction anchors in place.

    Normal: one-sided spring-damper on penetration.  Tangential: a spring to
    the anchor point laid down at touchdown, capped by the Coulomb cone; when
    the cap is hit the anchor is dragged along (sliding).
    """
    k, c, mu = P[P_K_GROUND], P[P_C_GROUND], P[P_MU]
    f = np.zeros((2, 2))   # foot, (tangential x, normal z)
    for i in range(2):
        z, zd = pos[i, 1], vel[i, 1]
        x, xd = pos[i, 0], vel[i, 0]
        fn = 0.0
        if z < 0.0:
            fn = -k * z - c * zd
            if fn < 0.0:
                fn = 0.0
        if fn <= 0.0:
            anchor[i] = x
            continue
        ft = -k * (x - anchor[i]) - c * xd
        cap = mu * fn
        if ft > cap:
            ft = cap
            anchor[i] = x + ft / k
        elif ft < -cap:
            ft = -cap
            anchor[i] = x + ft / k
        f[i, 0] = ft
        f[i, 1] = fn
    return f


@kernel
def accelerations(q, qd, tau, anchor, P):
    """Generalised accelerations and foot forces for joint torques ``tau`` (4,)."""
    pos, J, Jdqd = kinematics(q, qd, P)
    M = mass_matrix(q, P)
    m = link_masses(P)
    g = P[P_G]
    rhs = np.zeros(NQ)
    for j in range(4):
        rhs[3 + j] = tau[j]
    for r in range(N_LINKS):
        for a in range(NQ):
            rhs[a] += m[r] * (J[r, 0, a] * (0.0 - Jdqd[r, 0]) + J[r, 1, a] * (-g - Jdqd[r, 1]))
    foot_pos = np.empty((2, 2))
    foot_vel = np.zeros((2, 2))
    for i in range(2):
        r = FOOT_L + i
        for d in range(2):
            foot_pos[i, d] = pos[r, d]
            for a in range(NQ):
                foot_vel[i, d] += J[r, d, a] * qd[a]
    f = contact_forces(foot_pos, foot_vel, anchor, P)
    for i in range(2):
        r = FOOT_L + i
        for a in range(NQ):
            rhs[a] += J[r, 0, a] * f[i, 0] + J[r, 1, a] * f[i, 1]
    return cholesky_solve(M, rhs), f


@kernel
def physics_substep(q, qd, tau, anchor, P, dt):
    """One semi-implicit Euler step in place; returns the foot forces used."""
    qdd, f = accelerations(q, qd, tau, anchor, P)
    for a in range(NQ):
        qd[a] += qdd[a] * dt
    for a in range(NQ):
        q[a] += qd[a] * dt
    return f


@kernel
def pd_torque(target, q, qd, P):
    """Clamped PD torques for the four actuated joints."""
    tau = np.empty(4)
    lim = P[P_TAU_MAX]
    for j in range(4):
        if j % 2 == 0:
            kp, kd = P[P_KP_HIP], P[P_KD_HIP]
        else:
            kp, kd = P[P_KP_KNEE], P[P_KD_KNEE]
        t = kp * (target[j] - q[3 + j]) - kd * qd[3 + j]
        if t > lim:
            t = lim
        elif t < -lim:
            t = -lim
        tau[j] = t
    return tau


@kernel
def simulate(q, qd, anchor, target, P, n_sub, dt, aux):
    """``n_sub`` PD-controlled substeps in place.

    Fills ``aux`` (see ``AUX_*``) and returns False if the state went
    non-finite (the state is then left as it was when that happened).
    """
    for i in range(N_AUX):
        aux[i] = 0.0
    aux[AUX_MIN_NORMAL] = np.inf
    aux[AUX_CONE_EXCESS] = -np.inf
    for _ in range(n_sub):
        tau = pd_torque(target, q, qd, P)
        f = physics_substep(q, qd, tau, anchor, P, dt)
        for a in range(NQ):
            if not np.isfinite(q[a]) or not np.isfinite(qd[a]):
                return False
        for i in range(2):
            aux[AUX_FT_L + 2 * i] += f[i, 0] / n_sub
            aux[AUX_FN_L + 2 * i] += f[i, 1] / n_sub
            excess = abs(f[i, 0]) - P[P_MU] * f[i, 1]
            if excess > aux[AUX_CONE_EXCESS]:
                aux[AUX_CONE_EXCESS] = excess
            if f[i, 1] < aux[AUX_MIN_NORMAL]:
                aux[AUX_MIN_NORMAL] = f[i, 1]
        for j in range(4):
            aux[AUX_TAU + j] += tau[j] / n_sub
    return True


@kernel
def mechanical_energy(q, qd, P):
    M = mass_matrix(q, P)
    pos, _, _ = kinematics(q, qd, P)
    m = link_masses(P)
    ke = 0.0
    for a in range(NQ):
        for b in range(NQ):
            ke += 0.5 * qd[a] * M[a, b] * qd[b]
    pe = 0.0
    for r in range(N_LINKS):
        pe += m[r] * P[P_G] * pos[r, 1]
    return ke + pe


@kernel
def com_state(q, qd, qdd, P):
    """Whole-body centre of mass position, velocity and acceleration (each (2,))."""
    pos, J, Jdqd = kinematics(q, qd, P)
    m = link_masses(P)
    total = 0.0
    p = np.zeros(2)
    v = np.zeros(2)
    acc = np.zeros(2)
    for r in range(N_LINKS):
        total += m[r]
        for i in range(2):
            p[i] += m[r] * pos[r, i]
            for a in range(NQ):
                v[i] += m[r] * J[r, i, a] * qd[a]
                acc[i] += m[r] * J[r, i, a] * qdd[a]
            acc[i] += m[r] * Jdqd[r, i]
    return p / total, v / total, acc / total
