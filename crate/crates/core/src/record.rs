//! Per-epoch output rows.

/// One alternate-training epoch: accumulator snapshots, the bounds assembled
/// from them and, at the evaluation cadence, the observed losses and gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRecord {
    pub epoch: usize,
    pub eps_u: f64,
    pub eps_w: f64,
    pub gnorm_u: f64,
    pub gnorm_w: f64,
    pub lipschitz: f64,
    pub bound_u: f64,
    pub bound_w: f64,
    pub bound_total: f64,
    pub gnorm_bound_u: f64,
    pub gnorm_bound_w: f64,
    pub gnorm_bound_total: f64,
    pub train_loss: Option<f64>,
    pub test_loss: Option<f64>,
    pub gap: Option<f64>,
}

impl RunRecord {
    pub const COLUMNS: [&'static str; 15] = [
        "epoch",
        "eps_u",
        "eps_w",
        "gnorm_u",
        "gnorm_w",
        "lipschitz",
        "bound_u",
        "bound_w",
        "bound_total",
        "gnorm_bound_u",
        "gnorm_bound_w",
        "gnorm_bound_total",
        "train_loss",
        "test_loss",
        "gap",
    ];

    /// Numeric fields after `epoch`, in column order.
    pub fn values(&self) -> [Option<f64>; 14] {
        [
            Some(self.eps_u),
            Some(self.eps_w),
            Some(self.gnorm_u),
            Some(self.gnorm_w),
            Some(self.lipschitz),
            Some(self.bound_u),
            Some(self.bound_w),
            Some(self.bound_total),
            Some(self.gnorm_bound_u),
            Some(self.gnorm_bound_w),
            Some(self.gnorm_bound_total),
            self.train_loss,
            self.test_loss,
            self.gap,
        ]
    }
}

/// One joint-training iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointRecord {
    pub t: usize,
    pub l_hat: f64,
    pub mi_step_term: f64,
    pub mi_sum: f64,
    pub joint_bound: f64,
    /// Present only when the schedule admits the closed form.
    pub closed_form: Option<f64>,
    pub train_risk: f64,
}

impl JointRecord {
    pub const COLUMNS: [&'static str; 7] = [
        "t",
        "l_hat",
        "mi_step_term",
        "mi_sum",
        "joint_bound",
        "closed_form",
        "train_risk",
    ];

    pub fn values(&self) -> [Option<f64>; 6] {
        [
            Some(self.l_hat),
            Some(self.mi_step_term),
            Some(self.mi_sum),
            Some(self.joint_bound),
            self.closed_form,
            Some(self.train_risk),
        ]
    }
}
