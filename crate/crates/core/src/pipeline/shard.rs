/// Round-robin shard of the document at ingestion `index`.
#[inline]
pub fn shard_of(index: u64, num_shards: usize) -> u32 {
    (index % num_shards as u64) as u32
}

/// Split `k` across shards: `k / shards` each, the remainder going to the
/// lowest shard ids. Quota a shard cannot fill is handed, in shard order, to
/// shards with spare documents. Returns the quotas and a warning per shortfall.
pub fn shard_quotas(shard_sizes: &[usize], k: usize) -> (Vec<usize>, Vec<String>) {
    let shards = shard_sizes.len();
    let mut warnings = Vec::new();
    if shards == 0 {
        return (Vec::new(), warnings);
    }
    let base = k / shards;
    let extra = k % shards;
    let mut quotas: Vec<usize> = (0..shards).map(|i| base + (i < extra) as usize).collect();

    let mut spill = 0;
    for (i, (q, &size)) in quotas.iter_mut().zip(shard_sizes).enumerate() {
        if *q > size {
            warnings.push(format!(
                "shard {i} has {size} documents for a quota of {q}; redistributing {}",
                *q - size
            ));
            spill += *q - size;
            *q = size;
        }
    }
    for (q, &size) in quotas.iter_mut().zip(shard_sizes) {
        if spill == 0 {
            break;
        }
        let give = (size - *q).min(spill);
        *q += give;
        spill -= give;
    }
    if spill > 0 {
        warnings.push(format!("{spill} of the requested {k} documents could not be placed"));
    }
    (quotas, warnings)
}
