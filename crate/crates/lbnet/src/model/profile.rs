//! Static cost model: parameter counts and multiply-accumulate totals for a
//! given low-resolution input size.
//!
//! Convolution weights are charged once per output position; weights under a
//! shared trunk prefix are charged once per evaluation pass (the down pass
//! reuses `lffm.*`, the recursive stage reuses `rt.tm*`). Channel-attention
//! projections act on pooled 1x1 maps, so they are charged at a single
//! position. Token-mixing linears and the attention score/context products
//! are accumulated separately from the convolutional total, since the
//! quadratic token terms dwarf everything else at realistic sizes and compact
//! models are conventionally compared on the convolutional figure alone.

use super::lbnet::LBNet;

#[derive(Clone, Debug)]
pub struct ProfileRow {
    pub name: String,
    /// Stored parameter elements (zero for synthetic attention rows).
    pub elements: usize,
    /// Output positions one pass evaluates this tensor at.
    pub positions: u64,
    /// Evaluation passes per forward (weight sharing multiplies this).
    pub passes: u64,
    pub mult_adds: u64,
}

#[derive(Clone, Debug)]
pub struct ProfileReport {
    pub rows: Vec<ProfileRow>,
    pub total_params: usize,
    pub conv_mult_adds: u64,
    pub attn_mult_adds: u64,
    pub lr_height: usize,
    pub lr_width: usize,
}

/// Count parameters and per-forward mult-adds for `model` applied to an
/// `lr_height` x `lr_width` input.
pub fn profile(model: &LBNet, lr_height: usize, lr_width: usize) -> ProfileReport {
    let cfg = model.config();
    let hw = (lr_height * lr_width) as u64;
    let passes_for = |name: &str| -> u64 {
        if name.starts_with("rt.tm") {
            (cfg.recursions + 1) as u64
        } else if cfg.share_down_weights && name.starts_with("lffm.") {
            2
        } else {
            1
        }
    };
    let mut rows = Vec::new();
    let mut total_params = 0;
    let mut conv = 0u64;
    let mut attn = 0u64;
    for (name, t) in model.params().iter() {
        let elements = t.numel();
        total_params += elements;
        let passes = passes_for(name);
        // rank 4: convolution kernel, rank 2: token linear, rank 1: bias or
        // norm affine (no multiplies worth counting)
        let positions = match t.rank() {
            4 | 2 => {
                if name.contains(".ca.") || name.starts_with("bridge.") {
                    1
                } else {
                    hw
                }
            }
            _ => 0,
        };
        let mult_adds = elements as u64 * positions * passes;
        if t.rank() == 4 {
            conv += mult_adds;
        } else {
            attn += mult_adds;
        }
        rows.push(ProfileRow { name: name.to_string(), elements, positions, passes, mult_adds });
    }
    if cfg.rt_enabled {
        let dq = (cfg.tm_dim / cfg.qk_reduction) as u64;
        let dv = cfg.tm_dim as u64;
        let passes = (cfg.recursions + 1) as u64;
        for j in 0..cfg.tm_count {
            for (tail, width) in [("attn.scores", dq), ("attn.context", dv)] {
                let mult_adds = hw * hw * width * passes;
                attn += mult_adds;
                rows.push(ProfileRow {
                    name: format!("rt.tm{j}.{tail}"),
                    elements: 0,
                    positions: hw * hw,
                    passes,
                    mult_adds,
                });
            }
        }
    }
    ProfileReport {
        rows,
        total_params,
        conv_mult_adds: conv,
        attn_mult_adds: attn,
        lr_height,
        lr_width,
    }
}

impl ProfileReport {
    /// Tab-separated table, one row per tensor plus the synthetic attention
    /// product rows.
    pub fn tsv(&self) -> String {
        let mut s = String::from("name\telements\tpositions\tpasses\tmult_adds\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.name, r.elements, r.positions, r.passes, r.mult_adds
            ));
        }
        s
    }

    /// Human-readable totals.
    pub fn summary(&self) -> String {
        format!(
            "input: {}x{}\nparameters: {} ({})\nconv mult-adds: {} ({})\nattention mult-adds: {} ({})\nnote: the conv figure is the one comparable across compact models; attention\nterms grow with the square of the token count and are reported separately.\n",
            self.lr_width,
            self.lr_height,
            self.total_params,
            format_count(self.total_params as u64),
            self.conv_mult_adds,
            format_count(self.conv_mult_adds),
            self.attn_mult_adds,
            format_count(self.attn_mult_adds),
        )
    }
}

/// Render a count to three significant figures with a K/M/G/T suffix.
pub fn format_count(n: u64) -> String {
    const UNITS: [(u64, &str); 4] =
        [(1_000_000_000_000, "T"), (1_000_000_000, "G"), (1_000_000, "M"), (1_000, "K")];
    for (div, suffix) in UNITS {
        if n >= div {
            let v = n as f64 / div as f64;
            let digits = if v >= 100.0 {
                format!("{v:.0}")
            } else if v >= 10.0 {
                format!("{v:.1}")
            } else {
                format!("{v:.2}")
            };
            return format!("{digits}{suffix}");
        }
    }
    n.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::lbnet::ModelConfig;

    #[test]
    fn rows_account_for_every_parameter() {
        for cfg in [ModelConfig::lbnet(4), ModelConfig::lbnet_t(4)] {
            let m = LBNet::new(cfg, 0).unwrap();
            let report = profile(&m, 180, 320);
            let by_rows: usize = report.rows.iter().map(|r| r.elements).sum();
            assert_eq!(by_rows, m.param_count());
            assert_eq!(report.total_params, m.param_count());
        }
    }

    #[test]
    fn conv_mult_adds_at_reference_size() {
        let m = LBNet::new(ModelConfig::lbnet(4), 0).unwrap();
        let report = profile(&m, 180, 320);
        // 719,940 per position over 320*180, plus pooled gates at one
        // position each
        assert_eq!(report.conv_mult_adds, 719_940 * 57_600 + 10_752);

        let t = LBNet::new(ModelConfig::lbnet_t(4), 0).unwrap();
        let report_t = profile(&t, 180, 320);
        assert_eq!(report_t.conv_mult_adds, 179_214 * 57_600 + 4_536);
    }

    #[test]
    fn attention_side_is_linears_plus_token_products() {
        let m = LBNet::new(ModelConfig::lbnet(4), 0).unwrap();
        let report = profile(&m, 180, 320);
        let linears = 179_200u64 * 57_600 * 3 * 2;
        let products = 57_600u64 * 57_600 * (80 + 160) * 3 * 2;
        assert_eq!(report.attn_mult_adds, linears + products);

        let t = LBNet::new(ModelConfig::lbnet_t(4), 0).unwrap();
        let report_t = profile(&t, 180, 320);
        let linears_t = 157_500u64 * 57_600 * 3 * 2;
        let products_t = 57_600u64 * 57_600 * (75 + 150) * 3 * 2;
        assert_eq!(report_t.attn_mult_adds, linears_t + products_t);
    }

    #[test]
    fn disabling_the_recursive_stage_zeroes_the_attention_side() {
        let cfg = ModelConfig { rt_enabled: false, ..ModelConfig::lbnet(4) };
        let m = LBNet::new(cfg, 0).unwrap();
        let report = profile(&m, 180, 320);
        assert_eq!(report.attn_mult_adds, 0);
        assert!(report.rows.iter().all(|r| !r.name.contains("attn")));
    }

    #[test]
    fn tsv_lists_real_and_synthetic_rows() {
        let m = LBNet::new(ModelConfig::lbnet(4), 0).unwrap();
        let report = profile(&m, 8, 8);
        let tsv = report.tsv();
        assert!(tsv.starts_with("name\telements\tpositions\tpasses\tmult_adds\n"));
        assert!(tsv.contains("sf.weight\t864\t64\t1\t55296"));
        assert!(tsv.contains("rt.tm0.attn.scores\t0\t4096\t3\t"));
        let summary = report.summary();
        assert!(summary.contains("parameters: 738059 (738K)"));
    }

    #[test]
    fn count_formatting() {
        assert_eq!(format_count(604), "604");
        assert_eq!(format_count(999), "999");
        assert_eq!(format_count(1_000), "1.00K");
        assert_eq!(format_count(742_000), "742K");
        assert_eq!(format_count(738_059), "738K");
        assert_eq!(format_count(5_000_000), "5.00M");
        assert_eq!(format_count(38_900_000_000), "38.9G");
        assert_eq!(format_count(41_468_554_752), "41.5G");
        assert_eq!(format_count(10_322_730_936), "10.3G");
        assert_eq!(format_count(4_839_505_920_000), "4.84T");
    }
}
