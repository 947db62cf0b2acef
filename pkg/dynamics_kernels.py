"""
Compiled single-pose kernels for the point-mass chain

The simulator evaluates these several times per integration step, so they
work on one pose with explicit loops. The vectorised numpy versions in
``kinematics`` and ``gravity_model`` remain the batch path.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _cross(ux, uy, uz, vx, vy, vz):
    return uy * vz - uz * vy, uz * vx - ux * vz, ux * vy - uy * vx


@njit(cache=True)
def _rigid_point_acceleration(acc, omega, omega_dot, lx, ly, lz):
    """Acceleration of a point at lever l from a base point on the same link"""
    tx, ty, tz = _cross(omega_dot[0], omega_dot[1], omega_dot[2], lx, ly, lz)
    vx, vy, vz = _cross(omega[0], omega[1], omega[2], lx, ly, lz)
    cx, cy, cz = _cross(omega[0], omega[1], omega[2], vx, vy, vz)
    return acc[0] + tx + cx, acc[1] + ty + cy, acc[2] + tz + cz


@njit(cache=True)
def dh_frames(signs, offsets, d, alpha, a, q):
    """Rotations (n+1, 3, 3) and origins (n+1, 3) of frames 0..n"""
    n = q.shape[0]
    R = np.zeros((n + 1, 3, 3))
    O = np.zeros((n + 1, 3))
    for r in range(3):
        R[0, r, r] = 1.0
    for i in range(n):
        theta = signs[i] * q[i] + offsets[i]
        ct, st = np.cos(theta), np.sin(theta)
        ca, sa = np.cos(alpha[i]), np.sin(alpha[i])
        for r in range(3):
            x, y, z = R[i, r, 0], R[i, r, 1], R[i, r, 2]
            R[i + 1, r, 0] = x * ct + y * st
            R[i + 1, r, 1] = -x * st * ca + y * ct * ca + z * sa
            R[i + 1, r, 2] = x * st * sa - y * ct * sa + z * ca
            O[i + 1, r] = O[i, r] + a[i] * (x * ct + y * st) + d[i] * z
    return R, O


@njit(cache=True)
def gravity_from_frames(R, O, signs, blocks, gravity):
    """dP/dq from the (n, 4) parameter blocks [m, m*cx, m*cy, m*cz]"""
    n = signs.shape[0]
    tau = np.zeros(n)
    mass = 0.0
    moment = np.zeros(3)
    # outboard sums: everything from link k to the tip moves with joint k
    for k in range(n - 1, -1, -1):
        mass += blocks[k, 0]
        for r in range(3):
            moment[r] += (blocks[k, 0] * O[k + 1, r] + R[k + 1, r, 0] * blocks[k, 1]
                          + R[k + 1, r, 1] * blocks[k, 2] + R[k + 1, r, 2] * blocks[k, 3])
        cx, cy, cz = _cross(R[k, 0, 2], R[k, 1, 2], R[k, 2, 2],
                            moment[0] - mass * O[k, 0],
                            moment[1] - mass * O[k, 1],
                            moment[2] - mass * O[k, 2])
        tau[k] = -signs[k] * (gravity[0] * cx + gravity[1] * cy + gravity[2] * cz)
    return tau


@njit(cache=True)
def mass_and_velocity_torque(R, O, signs, masses, coms, armature, qdot):
    """M(q) and the Coriolis/centrifugal torque C(q, qdot) qdot of point masses

    The velocity term is sum_i m_i J_i^T (dJ_i/dt qdot), with the COM
    accelerations at zero joint acceleration propagated link by link.
    """
    n = signs.shape[0]
    p = np.empty((n, 3))
    for i in range(n):
        for r in range(3):
            p[i, r] = (O[i + 1, r] + R[i + 1, r, 0] * coms[i, 0]
                       + R[i + 1, r, 1] * coms[i, 1] + R[i + 1, r, 2] * coms[i, 2])

    # J[i, k] = s_k z_k x (p_i - o_k); distal joints cannot move proximal COMs
    J = np.zeros((n, n, 3))
    for i in range(n):
        for k in range(i + 1):
            cx, cy, cz = _cross(R[k, 0, 2], R[k, 1, 2], R[k, 2, 2],
                                p[i, 0] - O[k, 0], p[i, 1] - O[k, 1], p[i, 2] - O[k, 2])
            J[i, k, 0] = signs[k] * cx
            J[i, k, 1] = signs[k] * cy
            J[i, k, 2] = signs[k] * cz

    M = np.zeros((n, n))
    for k in range(n):
        M[k, k] = armature[k]
    for i in range(n):
        for k in range(i + 1):
            for j in range(i + 1):
                M[k, j] += masses[i] * (J[i, k, 0] * J[i, j, 0] + J[i, k, 1] * J[i, j, 1]
                                        + J[i, k, 2] * J[i, j, 2])

    c = np.zeros(n)
    moving = False
    for k in range(n):
        if qdot[k] != 0.0:
            moving = True
    if not moving:
        return M, c

    omega = np.zeros(3)
    omega_dot = np.zeros(3)
    acc = np.zeros(3)  # acceleration of origin i
    for i in range(n):
        s = signs[i] * qdot[i]
        wx, wy, wz = s * R[i, 0, 2], s * R[i, 1, 2], s * R[i, 2, 2]
        dx, dy, dz = _cross(omega[0], omega[1], omega[2], wx, wy, wz)
        omega_dot[0] += dx
        omega_dot[1] += dy
        omega_dot[2] += dz
        omega[0] += wx
        omega[1] += wy
        omega[2] += wz

        ax, ay, az = _rigid_point_acceleration(
            acc, omega, omega_dot, p[i, 0] - O[i, 0], p[i, 1] - O[i, 1], p[i, 2] - O[i, 2]
        )
        for k in range(i + 1):
            c[k] += masses[i] * (J[i, k, 0] * ax + J[i, k, 1] * ay + J[i, k, 2] * az)

        nx, ny, nz = _rigid_point_acceleration(
            acc, omega, omega_dot,
            O[i + 1, 0] - O[i, 0], O[i + 1, 1] - O[i, 1], O[i + 1, 2] - O[i, 2]
        )
        acc[0] = nx
        acc[1] = ny
        acc[2] = nz
    return M, c
