//! CSV emission: evaluation reports and training loss histories.
//! Header row, comma separators, `.` decimal marks, fixed precision so
//! identical runs produce identical bytes.

use std::fs;
use std::path::Path;

use priornet_core::metrics::QualityReport;
use priornet_core::train::LossBreakdown;

use crate::error::CliError;

/// Per-image rows plus a trailing `mean` row.
pub fn write_eval(path: &Path, rows: &[QualityReport]) -> Result<(), CliError> {
    let mut text = String::from("image_id,psnr_db,ssim\n");
    for row in rows {
        text.push_str(&format!(
            "{},{:.4},{:.4}\n",
            row.image_id, row.psnr_db, row.ssim
        ));
    }
    let (psnr, ssim) = means(rows);
    text.push_str(&format!("mean,{psnr:.4},{ssim:.4}\n"));
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Arithmetic means over the per-image rows.
pub fn means(rows: &[QualityReport]) -> (f64, f64) {
    if rows.is_empty() {
        return (0.0, 0.0);
    }
    let n = rows.len() as f64;
    (
        rows.iter().map(|r| r.psnr_db).sum::<f64>() / n,
        rows.iter().map(|r| r.ssim).sum::<f64>() / n,
    )
}

/// One row per iteration: iteration, mse, perceptual, total.
pub fn write_loss_history(path: &Path, history: &[LossBreakdown]) -> Result<(), CliError> {
    let mut text = String::from("iteration,mse,perceptual,total\n");
    for (iteration, loss) in history.iter().enumerate() {
        text.push_str(&format!(
            "{},{:.8},{:.8},{:.8}\n",
            iteration, loss.mse, loss.perceptual, loss.total
        ));
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
