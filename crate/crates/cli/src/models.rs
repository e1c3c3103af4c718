use std::fmt;
use std::str::FromStr;

/// A model id such as `dini:default`, `sphere:3` or `veronese:1,2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelId {
    Dini,
    Matveev,
    Flat(usize),
    Sphere(usize),
    Warped(usize),
    Perturbed(usize),
    FubiniStudy(usize),
    Veronese(usize, u32),
    Segre(usize, usize),
}

impl ModelId {
    /// Whether the id names a single metric.
    pub fn is_metric(&self) -> bool {
        !matches!(self, ModelId::Veronese(..) | ModelId::Segre(..))
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelId::Dini => write!(f, "dini:default"),
            ModelId::Matveev => write!(f, "matveev:default"),
            ModelId::Flat(d) => write!(f, "flat:{d}"),
            ModelId::Sphere(d) => write!(f, "sphere:{d}"),
            ModelId::Warped(d) => write!(f, "warped:{d}"),
            ModelId::Perturbed(d) => write!(f, "perturbed:{d}"),
            ModelId::FubiniStudy(n) => write!(f, "fs:{n}"),
            ModelId::Veronese(d, k) => write!(f, "veronese:{d},{k}"),
            ModelId::Segre(m, n) => write!(f, "segre:{m},{n}"),
        }
    }
}

fn dim(arg: &str, lo: usize, hi: usize) -> Result<usize, String> {
    let v: usize = arg.parse().map_err(|_| format!("expected an integer, got '{arg}'"))?;
    if !(lo..=hi).contains(&v) {
        return Err(format!("{v} outside [{lo}, {hi}]"));
    }
    Ok(v)
}

fn pair(arg: &str) -> Result<(usize, usize), String> {
    let (a, b) = arg.split_once(',').ok_or_else(|| format!("expected 'a,b', got '{arg}'"))?;
    Ok((dim(a, 1, 3)?, dim(b, 1, 4)?))
}

impl FromStr for ModelId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, arg) = s.split_once(':').ok_or_else(|| format!("model id '{s}' has no ':'"))?;
        let id = match kind {
            "dini" if arg == "default" => ModelId::Dini,
            "matveev" if arg == "default" => ModelId::Matveev,
            "flat" => ModelId::Flat(dim(arg, 2, 4)?),
            "sphere" => ModelId::Sphere(dim(arg, 2, 4)?),
            "warped" => ModelId::Warped(dim(arg, 2, 4)?),
            "perturbed" => ModelId::Perturbed(dim(arg, 2, 4)?),
            "fs" => ModelId::FubiniStudy(dim(arg, 1, 2)?),
            "veronese" => {
                let (d, k) = pair(arg)?;
                ModelId::Veronese(d, k as u32)
            }
            "segre" => {
                let (m, n) = pair(arg)?;
                ModelId::Segre(m, n)
            }
            _ => return Err(format!("unknown model id '{s}'")),
        };
        Ok(id)
    }
}
