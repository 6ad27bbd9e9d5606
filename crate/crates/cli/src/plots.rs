//! Gnuplot script laying out the standard figures from `timeseries.csv`.

use std::fmt::Write as _;

use rfcsim_core::TimeSeries;

fn col(name: &str) -> String {
    format!("\"{name}\"")
}

pub fn gnuplot_script(s: &TimeSeries, fault: Option<(f64, f64)>) -> String {
    let mut g = String::new();
    let _ = writeln!(g, "# usage: gnuplot plots.gp (reads timeseries.csv in this directory)");
    let _ = writeln!(g, "set datafile separator ','");
    let _ = writeln!(g, "set terminal pngcairo size 1000,600");
    let _ = writeln!(g, "set grid");
    let _ = writeln!(g, "set xlabel 'time (s)'");
    let _ = writeln!(g, "data = 'timeseries.csv'");
    if let Some((on, off)) = fault {
        let _ = writeln!(g, "set object 1 rect from {on},graph 0 to {off},graph 1 fc rgb '#eeeeee' behind");
    }

    let mut figure = |file: &str, ylabel: &str, series: &[(String, String)]| {
        let _ = writeln!(g, "\nset output '{file}'\nset ylabel '{ylabel}'");
        let parts: Vec<String> = series
            .iter()
            .map(|(c, title)| format!("data using {}:{} with lines title '{title}'", col("time"), col(c)))
            .collect();
        let _ = writeln!(g, "plot {}", parts.join(", \\\n     "));
    };

    for ch in &s.rfcs {
        let n = &ch.name;
        figure(
            &format!("{n}_voltage.png"),
            "|U| (p.u.)",
            &[(format!("{n}.u_g"), format!("{n} terminal voltage"))],
        );
        figure(
            &format!("{n}_active_power.png"),
            "P (p.u.)",
            &[
                (format!("{n}.p_g"), "single-phase P_g".into()),
                (format!("{n}.p_m_in"), "three-phase -P_m".into()),
            ],
        );
        figure(
            &format!("{n}_reactive_power.png"),
            "Q (p.u.)",
            &[(format!("{n}.q_g"), "single-phase Q_g".into())],
        );
    }
    let speeds: Vec<(String, String)> = s
        .rfcs
        .iter()
        .map(|c| (format!("{}.omega_pu", c.name), format!("{} speed", c.name)))
        .collect();
    figure("rotor_speed.png", "omega (p.u.)", &speeds);
    if let Some(first) = s.rfcs.first() {
        for other in s.rfcs.iter().skip(1) {
            let label = format!("{}-{}", first.name, other.name);
            figure(
                &format!("relative_speed_{label}.png"),
                "delta omega (p.u.)",
                &[(format!("domega.{label}"), format!("omega {label}"))],
            );
            figure(
                &format!("relative_power_{label}.png"),
                "delta P (p.u.)",
                &[(format!("dp_g.{label}"), format!("P_g {label}"))],
            );
        }
    }

    let _ = writeln!(g, "\nunset object 1");
    for ch in &s.rfcs {
        let n = &ch.name;
        let _ = writeln!(
            g,
            "\nset output '{n}_phase.png'\nset xlabel 'delta_m (rad)'\nset ylabel 'delta omega (p.u.)'\nset zlabel 'time (s)'\n\
             splot data using {}:{}:{} with lines title '{n}'",
            col(&format!("{n}.delta_m")),
            col(&format!("{n}.domega")),
            col("time"),
        );
    }
    g
}
