use crate::error::Result;
use crate::signal_io::Recording;

/// Small Laplacian: subtracts the mean of each channel's listed neighbors.
///
/// Channels without neighbors pass through unchanged.
pub fn laplacian_filter(rec: &Recording) -> Result<Recording> {
    let c = rec.n_channels();
    let neighbor_idx: Vec<Vec<usize>> = rec
        .channels()
        .iter()
        .map(|name| {
            rec.neighbors(name)
                .iter()
                .map(|nb| rec.channel_index(nb).expect("validated topology"))
                .collect()
        })
        .collect();

    let mut out = Vec::with_capacity(rec.samples().len());
    for t in 0..rec.n_samples() {
        let row = rec.row(t);
        for ch in 0..c {
            let nbs = &neighbor_idx[ch];
            if nbs.is_empty() {
                out.push(row[ch]);
            } else {
                let mean = nbs.iter().map(|&j| row[j]).sum::<f64>() / nbs.len() as f64;
                out.push(row[ch] - mean);
            }
        }
    }
    rec.with_samples(out)
}
