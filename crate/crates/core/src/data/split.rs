use super::{Sensor, Split};
use crate::error::{Error, Result};

pub const REGIONS: [&str; 3] = ["USA", "Europe", "Brazil"];

/// Temporal-generalization split: the older sensor pretrains, Brazilian
/// Sentinel-2 scenes fine-tune, European and US Sentinel-2 scenes test.
pub fn split_assign(sensor: Sensor, region: &str) -> Result<Split> {
    let region = REGIONS
        .iter()
        .find(|r| r.eq_ignore_ascii_case(region))
        .ok_or_else(|| Error::UnknownRegion(region.to_string()))?;
    Ok(match (sensor, *region) {
        (Sensor::Landsat5, _) => Split::Pretrain,
        (Sensor::Sentinel2, "Brazil") => Split::Finetune,
        (Sensor::Sentinel2, _) => Split::Test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_rule() {
        assert_eq!(split_assign(Sensor::Landsat5, "USA").unwrap(), Split::Pretrain);
        assert_eq!(split_assign(Sensor::Sentinel2, "Brazil").unwrap(), Split::Finetune);
        assert_eq!(split_assign(Sensor::Sentinel2, "Europe").unwrap(), Split::Test);
        assert_eq!(split_assign(Sensor::Sentinel2, "usa").unwrap(), Split::Test);
        assert!(matches!(split_assign(Sensor::Sentinel2, "Mars"), Err(Error::UnknownRegion(_))));
    }

    #[test]
    fn landsat_never_tests() {
        for r in REGIONS {
            assert_ne!(split_assign(Sensor::Landsat5, r).unwrap(), Split::Test);
        }
    }
}
