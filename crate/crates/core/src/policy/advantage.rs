use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// `(r_i - mean) / std` with the population std (divide by G). Groups with
/// std below `sigma_floor` get all-zero advantages.
pub fn group_advantages(rewards: &[f64], sigma_floor: f64) -> Vec<f64> {
    let g = rewards.len();
    if g == 0 {
        return Vec::new();
    }
    let n = g as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let mut dev: Vec<f64> = rewards.iter().map(|r| r - mean).collect();
    // second pass removes the rounding residue of the first mean
    let residue = dev.iter().sum::<f64>() / n;
    dev.iter_mut().for_each(|d| *d -= residue);
    let std = math::sqrt(dev.iter().map(|d| d * d).sum::<f64>() / n);
    if !(std >= sigma_floor) || std == 0.0 {
        return vec![0.0; g];
    }
    dev.iter().map(|d| d / std).collect()
}
