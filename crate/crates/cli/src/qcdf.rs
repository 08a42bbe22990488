//! The `qcdf` command.

use std::io::Write;

use cdpi_core::qdist::{q_cdf, wchisq_cdf, AccuracyParams, CdfValue};

use crate::{CliError, CliResult, QcdfArgs};

pub fn evaluate(args: &QcdfArgs) -> CliResult<CdfValue> {
    if !(args.eps > 0.0 && args.eps < 1.0) {
        return Err(CliError::Usage(format!("--eps must lie in (0, 1), got {}", args.eps)));
    }
    let acc = AccuracyParams {
        eps: args.eps,
        ..AccuracyParams::default()
    };
    let v = match (&args.lambdas, &args.sigma2, args.tau2) {
        (Some(l), None, None) => wchisq_cdf(l, args.q, &acc)?,
        (None, Some(s), Some(t)) => q_cdf(args.q, s, t, &acc)?,
        _ => {
            return Err(CliError::Usage(
                "give either --lambdas or both --sigma2 and --tau2".into(),
            ))
        }
    };
    Ok(v)
}

pub fn run(args: &QcdfArgs, out: &mut dyn Write) -> CliResult<()> {
    let v = evaluate(args)?;
    writeln!(out, "P(Q <= {}) = {:.10}", args.q, v.value)?;
    writeln!(out, "error bound {:.3e} after {} terms", v.error_bound, v.terms)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Cli, Command};
    use clap::Parser;

    fn eval(extra: &[&str]) -> CliResult<CdfValue> {
        let mut v = vec!["cdpi", "qcdf"];
        v.extend_from_slice(extra);
        match Cli::try_parse_from(v).unwrap().command {
            Command::Qcdf(a) => evaluate(&a),
            _ => unreachable!(),
        }
    }

    #[test]
    fn closed_forms() {
        // exponential with mean 2: 1 - exp(-q/2)
        let v = eval(&["--lambdas", "1,1", "--q", "1.38629"]).unwrap();
        assert!((v.value - (1.0 - (-1.38629f64 / 2.0).exp())).abs() < 1e-8);
        assert!((v.value - 0.5).abs() < 1e-5);
        // chi2(1) at 2: erf(1)
        let v = eval(&["--sigma2", "1,1", "--tau2", "0", "--q", "2"]).unwrap();
        assert!((v.value - 0.842700792949715).abs() < 1e-8);
        assert_eq!(eval(&["--lambdas", "1,1", "--q", "-1"]).unwrap().value, 0.0);
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(eval(&["--lambdas", "1,-1", "--q", "1"]), Err(CliError::Data(_))));
        assert!(matches!(eval(&["--lambdas", "1", "--q", "1", "--eps", "0"]), Err(CliError::Usage(_))));
        assert!(matches!(eval(&["--sigma2", "1,1", "--tau2", "-1", "--q", "1"]), Err(CliError::Data(_))));
    }
}
