//! Plain 4x4 matrix forward kinematics for DH rows.

use dexkit::kinematics::DhRow;

type M4 = [[f64; 4]; 4];

fn mul(a: &M4, b: &M4) -> M4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn eye() -> M4 {
    let mut m = [[0.0; 4]; 4];
    (0..4).for_each(|i| m[i][i] = 1.0);
    m
}

fn trans(x: f64, z: f64) -> M4 {
    let mut m = eye();
    m[0][3] = x;
    m[2][3] = z;
    m
}

fn rot_x(a: f64) -> M4 {
    let (s, c) = a.sin_cos();
    [[1.0, 0.0, 0.0, 0.0], [0.0, c, -s, 0.0], [0.0, s, c, 0.0], [0.0, 0.0, 0.0, 1.0]]
}

fn rot_z(a: f64) -> M4 {
    let (s, c) = a.sin_cos();
    [[c, -s, 0.0, 0.0], [s, c, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]
}

/// Tip and geometric position Jacobian (z-axis cross lever arm) of an
/// unmounted chain.
pub fn oracle(rows: &[DhRow], theta: &[f64]) -> ([f64; 3], Vec<[f64; 3]>) {
    let mut m = eye();
    let mut axes = Vec::new();
    for row in rows {
        let pre = mul(&mul(&mul(&m, &trans(row.trans_x, 0.0)), &trans(0.0, row.trans_z)), &rot_x(row.rot_x));
        let mut angle = row.rot_z_offset;
        if let Some(j) = row.joint_index {
            axes.push(([pre[0][2], pre[1][2], pre[2][2]], [pre[0][3], pre[1][3], pre[2][3]]));
            angle += theta[j];
        }
        m = mul(&pre, &rot_z(angle));
    }
    let tip = [m[0][3], m[1][3], m[2][3]];
    let columns = axes
        .iter()
        .map(|(z, o)| {
            let r = [tip[0] - o[0], tip[1] - o[1], tip[2] - o[2]];
            [z[1] * r[2] - z[2] * r[1], z[2] * r[0] - z[0] * r[2], z[0] * r[1] - z[1] * r[0]]
        })
        .collect();
    (tip, columns)
}
