//! First-order power accounting.
//!
//! Dynamic energy is charged per event: one router traversal and one link
//! traversal for every hop a packet copy makes, and one compute event per
//! injected spike. Static power is a fixed draw per router and per cluster.
//! Everything is linear in both the counts and the coefficients.

use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{SimReport, Summary};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PowerError {
    #[error("duration must be positive, got {0} s")]
    ZeroDuration(f64),
    #[error("invalid power coefficient {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("cannot calibrate: {0}")]
    Calibration(String),
    #[error("total power is zero, shares are undefined")]
    NoPower,
}

/// Energy per event in joules and static draw in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerModel {
    pub e_router_j: f64,
    pub e_link_j: f64,
    pub p_static_router_w: f64,
    pub p_static_cluster_w: f64,
    pub e_compute_spike_j: f64,
}

impl PowerModel {
    pub fn validate(&self) -> Result<(), PowerError> {
        let fields = [
            ("e_router_j", self.e_router_j),
            ("e_link_j", self.e_link_j),
            ("p_static_router_w", self.p_static_router_w),
            ("p_static_cluster_w", self.p_static_cluster_w),
            ("e_compute_spike_j", self.e_compute_spike_j),
        ];
        for (field, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(PowerError::Invalid {
                    field,
                    reason: format!("must be finite and >= 0, got {v}"),
                });
            }
        }
        Ok(())
    }

    /// Every dynamic coefficient multiplied by `k`.
    pub fn scale_dynamic(&self, k: f64) -> Self {
        Self {
            e_router_j: self.e_router_j * k,
            e_link_j: self.e_link_j * k,
            e_compute_spike_j: self.e_compute_spike_j * k,
            ..*self
        }
    }
}

/// Event counts a power estimate is charged against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Activity {
    pub router_traversals: f64,
    pub link_traversals: f64,
    pub spikes: f64,
    pub routers: usize,
    pub clusters: usize,
}

impl Activity {
    pub fn from_summary(s: &Summary) -> Self {
        Self {
            router_traversals: s.hop_traversals as f64,
            link_traversals: s.hop_traversals as f64,
            spikes: s.injected as f64,
            routers: s.routers,
            clusters: s.clusters,
        }
    }

    pub fn from_report(r: &SimReport) -> Self {
        Self::from_summary(&r.summary())
    }

    /// Same activity with every hop count multiplied by `d_scale`.
    pub fn scale_hops(&self, d_scale: f64) -> Self {
        Self {
            router_traversals: self.router_traversals * d_scale,
            link_traversals: self.link_traversals * d_scale,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerBreakdown {
    pub compute_w: f64,
    pub communication_w: f64,
    pub static_w: f64,
    pub total_w: f64,
    pub compute_share: f64,
    pub communication_share: f64,
    pub static_share: f64,
}

pub fn estimate(activity: &Activity, model: &PowerModel, duration_s: f64) -> Result<PowerBreakdown, PowerError> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(PowerError::ZeroDuration(duration_s));
    }
    model.validate()?;
    let communication_w =
        (activity.router_traversals * model.e_router_j + activity.link_traversals * model.e_link_j) / duration_s;
    let compute_w = activity.spikes * model.e_compute_spike_j / duration_s;
    let static_w =
        activity.routers as f64 * model.p_static_router_w + activity.clusters as f64 * model.p_static_cluster_w;
    let total_w = compute_w + communication_w + static_w;
    if total_w <= 0.0 {
        return Err(PowerError::NoPower);
    }
    Ok(PowerBreakdown {
        compute_w,
        communication_w,
        static_w,
        total_w,
        compute_share: 100.0 * compute_w / total_w,
        communication_share: 100.0 * communication_w / total_w,
        static_share: 100.0 * static_w / total_w,
    })
}

/// Target split used by [`calibrate_to_shares`], in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShareTarget {
    pub total_w: f64,
    pub compute_percent: f64,
    pub communication_percent: f64,
    pub static_percent: f64,
}

impl ShareTarget {
    /// 72 mW split 30/10/60. Illustrative only: the coefficients it yields
    /// depend on the activity it is calibrated against.
    pub const TRUENORTH_TABLE1: ShareTarget = ShareTarget {
        total_w: 0.072,
        compute_percent: 30.0,
        communication_percent: 10.0,
        static_percent: 60.0,
    };
}

/// Chooses coefficients so that `activity` over `duration_s` produces the
/// target watts. Communication energy is split evenly between routers and
/// links, static power evenly between routers and clusters.
pub fn calibrate_to_shares(
    activity: &Activity,
    duration_s: f64,
    target: &ShareTarget,
) -> Result<PowerModel, PowerError> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(PowerError::ZeroDuration(duration_s));
    }
    let sum = target.compute_percent + target.communication_percent + target.static_percent;
    if (sum - 100.0).abs() > 1e-9 || !(target.total_w > 0.0) {
        return Err(PowerError::Calibration(format!(
            "shares must sum to 100 and total must be positive (sum {sum}, total {} W)",
            target.total_w
        )));
    }
    let need = |pct: f64, count: f64, what: &str| -> Result<f64, PowerError> {
        if pct == 0.0 {
            Ok(0.0)
        } else if count > 0.0 {
            Ok(target.total_w * pct / 100.0 / count)
        } else {
            Err(PowerError::Calibration(format!("{what} is zero but its share is {pct}%")))
        }
    };
    let compute_j = need(target.compute_percent, activity.spikes, "spike count")? * duration_s;
    let e_router_j = need(target.communication_percent / 2.0, activity.router_traversals, "hop count")? * duration_s;
    let e_link_j = need(target.communication_percent / 2.0, activity.link_traversals, "hop count")? * duration_s;
    let p_static_router_w = need(target.static_percent / 2.0, activity.routers as f64, "router count")?;
    let p_static_cluster_w = need(target.static_percent / 2.0, activity.clusters as f64, "cluster count")?;
    Ok(PowerModel {
        e_router_j,
        e_link_j,
        p_static_router_w,
        p_static_cluster_w,
        e_compute_spike_j: compute_j,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopSensitivity {
    pub d_scale: f64,
    pub communication_w: f64,
    pub scaled_communication_w: f64,
    pub delta_w: f64,
    /// `delta_w / communication_w`, 0 when there is no communication power.
    pub relative_change: f64,
    pub scaled: PowerBreakdown,
}

/// Communication power with every hop count multiplied by `d_scale`.
pub fn hop_energy_sensitivity(
    activity: &Activity,
    model: &PowerModel,
    duration_s: f64,
    d_scale: f64,
) -> Result<HopSensitivity, PowerError> {
    if !(d_scale > 0.0 && d_scale.is_finite()) {
        return Err(PowerError::Invalid {
            field: "d_scale",
            reason: format!("must be positive, got {d_scale}"),
        });
    }
    let base = estimate(activity, model, duration_s)?;
    let scaled = estimate(&activity.scale_hops(d_scale), model, duration_s)?;
    let delta_w = scaled.communication_w - base.communication_w;
    Ok(HopSensitivity {
        d_scale,
        communication_w: base.communication_w,
        scaled_communication_w: scaled.communication_w,
        delta_w,
        relative_change: if base.communication_w > 0.0 {
            delta_w / base.communication_w
        } else {
            0.0
        },
        scaled,
    })
}

/// `component,watts,share_percent`: compute, communication, static, total,
/// then one `communication@d_scale=X` row per sensitivity (share of the
/// rescaled total).
pub fn write_breakdown_csv<W: io::Write>(
    b: &PowerBreakdown,
    sensitivities: &[HopSensitivity],
    w: W,
) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["component", "watts", "share_percent"])?;
    let rows = [
        ("compute", b.compute_w, b.compute_share),
        ("communication", b.communication_w, b.communication_share),
        ("static", b.static_w, b.static_share),
        ("total", b.total_w, 100.0),
    ];
    for (name, watts, share) in rows {
        out.write_record([name.to_string(), watts.to_string(), share.to_string()])?;
    }
    for s in sensitivities {
        out.write_record([
            format!("communication@d_scale={}", s.d_scale),
            s.scaled_communication_w.to_string(),
            s.scaled.communication_share.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
