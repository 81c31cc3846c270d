//! Writes the synthetic daily profile as a price CSV, reads it back and
//! prints the summary and a forecast window.

use battery_mpcrl::prices::{forecast_window, read_csv, synth_daily, write_csv, SyntheticProfile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let series = synth_daily(&SyntheticProfile::default(), 0.5)?;
    let mut buf = Vec::new();
    write_csv(&series, &mut buf)?;
    print!("{}", String::from_utf8_lossy(&buf));
    let back = read_csv(buf.as_slice(), 0.5)?;
    println!("summary: {:?}", back.summary());
    let w = forecast_window(&back, 20, 12);
    println!("12-hour window from hour 20 (wraps): buy {:?}", w.buy);
    println!("sell {:?}", w.sell);
    Ok(())
}
