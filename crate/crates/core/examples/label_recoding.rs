//! Recode NALCMS and CORINE label maps into the shared General scheme and
//! compare class distributions.

use xsensor::labels::{builtin_schemes, class_distribution, crosswalk, recode};
use xsensor::raster::Raster;

fn main() -> xsensor::Result<()> {
    let s = builtin_schemes();
    for n in &s.notes {
        println!("note: {n}");
    }

    let nalcms: Vec<u8> = (0..400).map(|i| [1u8, 1, 6, 10, 15, 17, 18, 255][i % 8]).collect();
    let src = Raster::from_u8(20, 20, 1, nalcms)?;
    let general = recode(&src, &s.nalcms_to_general)?;

    let fine = class_distribution(&src, &s.nalcms)?;
    let pushed = fine.push_forward(&s.nalcms_to_general, &s.general)?;
    let direct = class_distribution(&general, &s.general)?;
    println!("{:<20} {:>9} {:>9}", "General class", "pushed", "recoded");
    for e in s.general.entries() {
        println!(
            "{:<20} {:>9.4} {:>9.4}",
            e.name,
            pushed.fraction(e.code).unwrap(),
            direct.fraction(e.code).unwrap()
        );
    }

    let corine: Vec<u8> = (0..400).map(|i| [2u8, 19, 28, 10, 15, 31][i % 6]).collect();
    let tgt = recode(&Raster::from_u8(20, 20, 1, corine)?, &s.corine_to_general)?;
    let cw = crosswalk(&general, &tgt)?;
    println!("crosswalk over {} jointly valid pixels", cw.total());
    Ok(())
}
