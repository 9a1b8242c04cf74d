//! Dormand-Prince 8(5,3) stepping for matrix-valued linear ODEs.
//!
//! Two dense-output modes are available. `Restep` re-integrates one step from
//! the nearest accepted node on the anchor side of the query time; it is as
//! accurate as the grid and exact near the anchor, where relative accuracy of
//! small states matters. `Interpolant` stores the seventh-order continuous
//! extension of each step and is far cheaper per query.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Right-hand side `Y' = f(t, Y)` on matrix-valued states.
pub trait MatrixRhs: Send + Sync {
    fn eval(&self, t: f64, y: &DMatrix<f64>) -> Result<DMatrix<f64>>;
}

impl<F> MatrixRhs for F
where
    F: Fn(f64, &DMatrix<f64>) -> Result<DMatrix<f64>> + Send + Sync,
{
    fn eval(&self, t: f64, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self(t, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rtol: 1e-10,
            atol: 1e-12,
        }
    }
}

impl Tolerances {
    pub fn tightened(self, factor: f64) -> Self {
        Tolerances {
            rtol: self.rtol / factor,
            atol: self.atol / factor,
        }
    }
}

const SAFE: f64 = 0.9;
const FAC_MIN: f64 = 0.333;
const FAC_MAX: f64 = 6.0;
const MAX_STEPS: usize = 2_000_000;

const A21: f64 = 5.26001519587677318785587544488E-2;
const A31: f64 = 1.97250569845378994544595329183E-2;
const A32: f64 = 5.91751709536136983633785987549E-2;
const A41: f64 = 2.95875854768068491816892993775E-2;
const A43: f64 = 8.87627564304205475450678981324E-2;
const A51: f64 = 2.41365134159266685502369798665E-1;
const A53: f64 = -8.84549479328286085344864962717E-1;
const A54: f64 = 9.24834003261792003115737966543E-1;
const A61: f64 = 3.7037037037037037037037037037E-2;
const A64: f64 = 1.70828608729473871279604482173E-1;
const A65: f64 = 1.25467687566822425016691814123E-1;
const A71: f64 = 3.7109375E-2;
const A74: f64 = 1.70252211019544039314978060272E-1;
const A75: f64 = 6.02165389804559606850219397283E-2;
const A76: f64 = -1.7578125E-2;
const A81: f64 = 3.70920001185047927108779319836E-2;
const A84: f64 = 1.70383925712239993810214054705E-1;
const A85: f64 = 1.07262030446373284651809199168E-1;
const A86: f64 = -1.53194377486244017527936158236E-2;
const A87: f64 = 8.27378916381402288758473766002E-3;
const A91: f64 = 6.24110958716075717114429577812E-1;
const A94: f64 = -3.36089262944694129406857109825E0;
const A95: f64 = -8.68219346841726006818189891453E-1;
const A96: f64 = 2.75920996994467083049415600797E1;
const A97: f64 = 2.01540675504778934086186788979E1;
const A98: f64 = -4.34898841810699588477366255144E1;
const A101: f64 = 4.77662536438264365890433908527E-1;
const A104: f64 = -2.48811461997166764192642586468E0;
const A105: f64 = -5.90290826836842996371446475743E-1;
const A106: f64 = 2.12300514481811942347288949897E1;
const A107: f64 = 1.52792336328824235832596922938E1;
const A108: f64 = -3.32882109689848629194453265587E1;
const A109: f64 = -2.03312017085086261358222928593E-2;
const A111: f64 = -9.3714243008598732571704021658E-1;
const A114: f64 = 5.18637242884406370830023853209E0;
const A115: f64 = 1.09143734899672957818500254654E0;
const A116: f64 = -8.14978701074692612513997267357E0;
const A117: f64 = -1.85200656599969598641566180701E1;
const A118: f64 = 2.27394870993505042818970056734E1;
const A119: f64 = 2.49360555267965238987089396762E0;
const A1110: f64 = -3.0467644718982195003823669022E0;
const A121: f64 = 2.27331014751653820792359768449E0;
const A124: f64 = -1.05344954667372501984066689879E1;
const A125: f64 = -2.00087205822486249909675718444E0;
const A126: f64 = -1.79589318631187989172765950534E1;
const A127: f64 = 2.79488845294199600508499808837E1;
const A128: f64 = -2.85899827713502369474065508674E0;
const A129: f64 = -8.87285693353062954433549289258E0;
const A1210: f64 = 1.23605671757943030647266201528E1;
const A1211: f64 = 6.43392746015763530355970484046E-1;
const B1: f64 = 5.42937341165687622380535766363E-2;
const B6: f64 = 4.45031289275240888144113950566E0;
const B7: f64 = 1.89151789931450038304281599044E0;
const B8: f64 = -5.8012039600105847814672114227E0;
const B9: f64 = 3.1116436695781989440891606237E-1;
const B10: f64 = -1.52160949662516078556178806805E-1;
const B11: f64 = 2.01365400804030348374776537501E-1;
const B12: f64 = 4.47106157277725905176885569043E-2;
const BHH1: f64 = 0.244094488188976377952755905512E+00;
const BHH2: f64 = 0.733846688281611857341361741547E+00;
const BHH3: f64 = 0.220588235294117647058823529412E-01;
const C2: f64 = 0.526001519587677318785587544488E-01;
const C3: f64 = 0.789002279381515978178381316732E-01;
const C4: f64 = 0.118350341907227396726757197510E+00;
const C5: f64 = 0.281649658092772603273242802490E+00;
const C6: f64 = 0.333333333333333333333333333333E+00;
const C7: f64 = 0.25E+00;
const C8: f64 = 0.307692307692307692307692307692E+00;
const C9: f64 = 0.651282051282051282051282051282E+00;
const C10: f64 = 0.6E+00;
const C11: f64 = 0.857142857142857142857142857142E+00;
const ER1: f64 = 0.1312004499419488073250102996E-01;
const ER6: f64 = -0.1225156446376204440720569753E+01;
const ER7: f64 = -0.4957589496572501915214079952E+00;
const ER8: f64 = 0.1664377182454986536961530415E+01;
const ER9: f64 = -0.3503288487499736816886487290E+00;
const ER10: f64 = 0.3341791187130174790297318841E+00;
const ER11: f64 = 0.8192320648511571246570742613E-01;
const ER12: f64 = -0.2235530786388629525884427845E-01;


// Continuous extension.
const A141: f64 = 5.61675022830479523392909219681E-2;
const A147: f64 = 2.53500210216624811088794765333E-1;
const A148: f64 = -2.46239037470802489917441475441E-1;
const A149: f64 = -1.24191423263816360469010140626E-1;
const A1410: f64 = 1.5329179827876569731206322685E-1;
const A1411: f64 = 8.20105229563468988491666602057E-3;
const A1412: f64 = 7.56789766054569976138603589584E-3;
const A1413: f64 = -8.298E-3;
const A151: f64 = 3.18346481635021405060768473261E-2;
const A156: f64 = 2.83009096723667755288322961402E-2;
const A157: f64 = 5.35419883074385676223797384372E-2;
const A158: f64 = -5.49237485713909884646569340306E-2;
const A1511: f64 = -1.08347328697249322858509316994E-4;
const A1512: f64 = 3.82571090835658412954920192323E-4;
const A1513: f64 = -3.40465008687404560802977114492E-4;
const A1514: f64 = 1.41312443674632500278074618366E-1;
const A161: f64 = -4.28896301583791923408573538692E-1;
const A166: f64 = -4.69762141536116384314449447206E0;
const A167: f64 = 7.68342119606259904184240953878E0;
const A168: f64 = 4.06898981839711007970213554331E0;
const A169: f64 = 3.56727187455281109270669543021E-1;
const A1613: f64 = -1.39902416515901462129418009734E-3;
const A1614: f64 = 2.9475147891527723389556272149E0;
const A1615: f64 = -9.15095847217987001081870187138E0;
const C14: f64 = 0.1E+00;
const C15: f64 = 0.2E+00;
const C16: f64 = 0.777777777777777777777777777778E+00;
const D41: f64 = -0.84289382761090128651353491142E+01;
const D46: f64 = 0.56671495351937776962531783590E+00;
const D47: f64 = -0.30689499459498916912797304727E+01;
const D48: f64 = 0.23846676565120698287728149680E+01;
const D49: f64 = 0.21170345824450282767155149946E+01;
const D410: f64 = -0.87139158377797299206789907490E+00;
const D411: f64 = 0.22404374302607882758541771650E+01;
const D412: f64 = 0.63157877876946881815570249290E+00;
const D413: f64 = -0.88990336451333310820698117400E-01;
const D414: f64 = 0.18148505520854727256656404962E+02;
const D415: f64 = -0.91946323924783554000451984436E+01;
const D416: f64 = -0.44360363875948939664310572000E+01;
const D51: f64 = 0.10427508642579134603413151009E+02;
const D56: f64 = 0.24228349177525818288430175319E+03;
const D57: f64 = 0.16520045171727028198505394887E+03;
const D58: f64 = -0.37454675472269020279518312152E+03;
const D59: f64 = -0.22113666853125306036270938578E+02;
const D510: f64 = 0.77334326684722638389603898808E+01;
const D511: f64 = -0.30674084731089398182061213626E+02;
const D512: f64 = -0.93321305264302278729567221706E+01;
const D513: f64 = 0.15697238121770843886131091075E+02;
const D514: f64 = -0.31139403219565177677282850411E+02;
const D515: f64 = -0.93529243588444783865713862664E+01;
const D516: f64 = 0.35816841486394083752465898540E+02;
const D61: f64 = 0.19985053242002433820987653617E+02;
const D66: f64 = -0.38703730874935176555105901742E+03;
const D67: f64 = -0.18917813819516756882830838328E+03;
const D68: f64 = 0.52780815920542364900561016686E+03;
const D69: f64 = -0.11573902539959630126141871134E+02;
const D610: f64 = 0.68812326946963000169666922661E+01;
const D611: f64 = -0.10006050966910838403183860980E+01;
const D612: f64 = 0.77771377980534432092869265740E+00;
const D613: f64 = -0.27782057523535084065932004339E+01;
const D614: f64 = -0.60196695231264120758267380846E+02;
const D615: f64 = 0.84320405506677161018159903784E+02;
const D616: f64 = 0.11992291136182789328035130030E+02;
const D71: f64 = -0.25693933462703749003312586129E+02;
const D76: f64 = -0.15418974869023643374053993627E+03;
const D77: f64 = -0.23152937917604549567536039109E+03;
const D78: f64 = 0.35763911791061412378285349910E+03;
const D79: f64 = 0.93405324183624310003907691704E+02;
const D710: f64 = -0.37458323136451633156875139351E+02;
const D711: f64 = 0.10409964950896230045147246184E+03;
const D712: f64 = 0.29840293426660503123344363579E+02;
const D713: f64 = -0.43533456590011143754432175058E+02;
const D714: f64 = 0.96324553959188282948394950600E+02;
const D715: f64 = -0.39177261675615439165231486172E+02;
const D716: f64 = -0.14972683625798562581422125276E+03;

/// Stage derivatives `k1 ..= k12` of one step (index 0 holds `k1`).
struct Stages {
    k: Vec<DMatrix<f64>>,
}

fn combo(y: &DMatrix<f64>, h: f64, terms: &[(&DMatrix<f64>, f64)]) -> DMatrix<f64> {
    let mut acc = y.clone();
    for (k, a) in terms {
        add_scaled(&mut acc, h * a, k);
    }
    acc
}

fn add_scaled(acc: &mut DMatrix<f64>, a: f64, k: &DMatrix<f64>) {
    acc.zip_apply(k, |x, y| *x += a * y);
}

fn stages<R: MatrixRhs + ?Sized>(
    rhs: &R,
    t: f64,
    y: &DMatrix<f64>,
    k1: &DMatrix<f64>,
    h: f64,
) -> Result<Stages> {
    let k2 = rhs.eval(t + C2 * h, &combo(y, h, &[(k1, A21)]))?;
    let k3 = rhs.eval(t + C3 * h, &combo(y, h, &[(k1, A31), (&k2, A32)]))?;
    let k4 = rhs.eval(t + C4 * h, &combo(y, h, &[(k1, A41), (&k3, A43)]))?;
    let k5 = rhs.eval(t + C5 * h, &combo(y, h, &[(k1, A51), (&k3, A53), (&k4, A54)]))?;
    let k6 = rhs.eval(t + C6 * h, &combo(y, h, &[(k1, A61), (&k4, A64), (&k5, A65)]))?;
    let k7 = rhs.eval(
        t + C7 * h,
        &combo(y, h, &[(k1, A71), (&k4, A74), (&k5, A75), (&k6, A76)]),
    )?;
    let k8 = rhs.eval(
        t + C8 * h,
        &combo(y, h, &[(k1, A81), (&k4, A84), (&k5, A85), (&k6, A86), (&k7, A87)]),
    )?;
    let k9 = rhs.eval(
        t + C9 * h,
        &combo(y, h, &[(k1, A91), (&k4, A94), (&k5, A95), (&k6, A96), (&k7, A97), (&k8, A98)]),
    )?;
    let k10 = rhs.eval(
        t + C10 * h,
        &combo(
            y,
            h,
            &[(k1, A101), (&k4, A104), (&k5, A105), (&k6, A106), (&k7, A107), (&k8, A108), (&k9, A109)],
        ),
    )?;
    let k11 = rhs.eval(
        t + C11 * h,
        &combo(
            y,
            h,
            &[
                (k1, A111),
                (&k4, A114),
                (&k5, A115),
                (&k6, A116),
                (&k7, A117),
                (&k8, A118),
                (&k9, A119),
                (&k10, A1110),
            ],
        ),
    )?;
    let k12 = rhs.eval(
        t + h,
        &combo(
            y,
            h,
            &[
                (k1, A121),
                (&k4, A124),
                (&k5, A125),
                (&k6, A126),
                (&k7, A127),
                (&k8, A128),
                (&k9, A129),
                (&k10, A1210),
                (&k11, A1211),
            ],
        ),
    )?;
    Ok(Stages {
        k: vec![k1.clone(), k2, k3, k4, k5, k6, k7, k8, k9, k10, k11, k12],
    })
}

impl Stages {
    fn get(&self, i: usize) -> &DMatrix<f64> {
        &self.k[i - 1]
    }

    fn increment(&self) -> DMatrix<f64> {
        let mut incr = self.get(1) * B1;
        for (i, b) in [(6, B6), (7, B7), (8, B8), (9, B9), (10, B10), (11, B11), (12, B12)] {
            add_scaled(&mut incr, b, self.get(i));
        }
        incr
    }
}

/// One DOP853 step. Returns the new state and the scaled error estimate
/// (accept when `<= 1`; always 0 without tolerances). `k1` is `f(t, y)`.
pub(crate) fn step<R: MatrixRhs + ?Sized>(
    rhs: &R,
    t: f64,
    y: &DMatrix<f64>,
    k1: &DMatrix<f64>,
    h: f64,
    tol: Option<Tolerances>,
) -> Result<(DMatrix<f64>, f64)> {
    let (y_new, err, _) = step_with_stages(rhs, t, y, k1, h, tol)?;
    Ok((y_new, err))
}

fn step_with_stages<R: MatrixRhs + ?Sized>(
    rhs: &R,
    t: f64,
    y: &DMatrix<f64>,
    k1: &DMatrix<f64>,
    h: f64,
    tol: Option<Tolerances>,
) -> Result<(DMatrix<f64>, f64, Stages)> {
    let st = stages(rhs, t, y, k1, h)?;
    let incr = st.increment();
    let y_new = y + &incr * h;
    if y_new.iter().any(|v| !v.is_finite()) {
        return Err(Error::Integration {
            t,
            reason: "non-finite state".into(),
        });
    }
    let Some(tol) = tol else {
        return Ok((y_new, 0.0, st));
    };

    let mut err5 = st.get(1) * ER1;
    for (i, e) in [(6, ER6), (7, ER7), (8, ER8), (9, ER9), (10, ER10), (11, ER11), (12, ER12)] {
        add_scaled(&mut err5, e, st.get(i));
    }
    let mut err3 = incr;
    add_scaled(&mut err3, -BHH1, st.get(1));
    add_scaled(&mut err3, -BHH2, st.get(9));
    add_scaled(&mut err3, -BHH3, st.get(12));

    let mut e5 = 0.0;
    let mut e3 = 0.0;
    for i in 0..y.len() {
        let sk = tol.atol + tol.rtol * y[i].abs().max(y_new[i].abs());
        e5 += (err5[i] / sk).powi(2);
        e3 += (err3[i] / sk).powi(2);
    }
    let mut deno = e5 + 0.01 * e3;
    if deno <= 0.0 {
        deno = 1.0;
    }
    let err = h.abs() * e5 * (1.0 / (y.len() as f64 * deno)).sqrt();
    Ok((y_new, err, st))
}

/// Coefficients of the continuous extension on `[t, t + h]`; `k13` is the
/// derivative at the new point.
#[allow(clippy::too_many_arguments)]
fn continuous_extension<R: MatrixRhs + ?Sized>(
    rhs: &R,
    t: f64,
    y: &DMatrix<f64>,
    y_new: &DMatrix<f64>,
    h: f64,
    st: &Stages,
    k13: &DMatrix<f64>,
) -> Result<Vec<DMatrix<f64>>> {
    let k = |i: usize| st.get(i);
    let ydiff = y_new - y;
    let bspl = k(1) * h - &ydiff;
    let cont4 = &ydiff - k13 * h - &bspl;
    let lin = |d: [f64; 8]| {
        let mut acc = k(1) * d[0];
        for (j, i) in [6usize, 7, 8, 9, 10, 11, 12].into_iter().enumerate() {
            add_scaled(&mut acc, d[j + 1], k(i));
        }
        acc
    };
    let mut c5 = lin([D41, D46, D47, D48, D49, D410, D411, D412]);
    let mut c6 = lin([D51, D56, D57, D58, D59, D510, D511, D512]);
    let mut c7 = lin([D61, D66, D67, D68, D69, D610, D611, D612]);
    let mut c8 = lin([D71, D76, D77, D78, D79, D710, D711, D712]);
    let k14 = rhs.eval(
        t + C14 * h,
        &combo(
            y,
            h,
            &[
                (k(1), A141),
                (k(7), A147),
                (k(8), A148),
                (k(9), A149),
                (k(10), A1410),
                (k(11), A1411),
                (k(12), A1412),
                (k13, A1413),
            ],
        ),
    )?;
    let k15 = rhs.eval(
        t + C15 * h,
        &combo(
            y,
            h,
            &[
                (k(1), A151),
                (k(6), A156),
                (k(7), A157),
                (k(8), A158),
                (k(11), A1511),
                (k(12), A1512),
                (k13, A1513),
                (&k14, A1514),
            ],
        ),
    )?;
    let k16 = rhs.eval(
        t + C16 * h,
        &combo(
            y,
            h,
            &[
                (k(1), A161),
                (k(6), A166),
                (k(7), A167),
                (k(8), A168),
                (k(9), A169),
                (k13, A1613),
                (&k14, A1614),
                (&k15, A1615),
            ],
        ),
    )?;
    for (c, d) in [
        (&mut c5, [D413, D414, D415, D416]),
        (&mut c6, [D513, D514, D515, D516]),
        (&mut c7, [D613, D614, D615, D616]),
        (&mut c8, [D713, D714, D715, D716]),
    ] {
        add_scaled(c, d[0], k13);
        add_scaled(c, d[1], &k14);
        add_scaled(c, d[2], &k15);
        add_scaled(c, d[3], &k16);
        *c *= h;
    }
    Ok(vec![y.clone(), ydiff, bspl, cont4, c5, c6, c7, c8])
}

fn eval_extension(cont: &[DMatrix<f64>], s: f64) -> DMatrix<f64> {
    let s1 = 1.0 - s;
    let mut conpar = &cont[7] * s;
    conpar += &cont[6];
    conpar *= s1;
    conpar += &cont[5];
    conpar *= s;
    conpar += &cont[4];
    let mut y = conpar * s1;
    y += &cont[3];
    y *= s;
    y += &cont[2];
    y *= s1;
    y += &cont[1];
    y *= s;
    y += &cont[0];
    y
}

fn scaled_norm(v: &DMatrix<f64>, y: &DMatrix<f64>, tol: Tolerances) -> f64 {
    let mut acc = 0.0;
    for i in 0..v.len() {
        acc += (v[i] / (tol.atol + tol.rtol * y[i].abs())).powi(2);
    }
    (acc / v.len().max(1) as f64).sqrt()
}

/// Starting step estimate (Hairer-Norsett-Wanner, order 8).
fn initial_step<R: MatrixRhs + ?Sized>(
    rhs: &R,
    t: f64,
    y: &DMatrix<f64>,
    f0: &DMatrix<f64>,
    dir: f64,
    h_max: f64,
    tol: Tolerances,
) -> Result<f64> {
    let dnf = scaled_norm(f0, y, tol);
    let dny = scaled_norm(y, y, tol);
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        0.01 * dny / dnf
    };
    h = h.min(h_max);
    let y1 = y + f0 * (dir * h);
    let f1 = rhs.eval(t + dir * h, &y1)?;
    let der2 = scaled_norm(&(&f1 - f0), y, tol) / h;
    let der12 = der2.max(dnf);
    let h1 = if der12 <= 1e-15 {
        (1e-6f64).max(h.abs() * 1e-3)
    } else {
        (0.01 / der12).powf(1.0 / 8.0)
    };
    Ok((100.0 * h).min(h1).min(h_max))
}

/// How [`Trajectory::eval`] produces states between accepted nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenseMode {
    Restep,
    Interpolant,
}

#[derive(Debug, Clone)]
struct Node {
    t: f64,
    y: DMatrix<f64>,
    /// Continuous extension of the step that ended at this node.
    cont: Option<Vec<DMatrix<f64>>>,
}

/// Adaptive solution of `Y' = f(t, Y)` from an anchor, integrated forward and
/// backward to cover `[lo, hi]`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    anchor: f64,
    tol: Tolerances,
    mode: DenseMode,
    /// Increasing times, first node is the anchor.
    forward: Vec<Node>,
    /// Decreasing times, first node is the anchor.
    backward: Vec<Node>,
    steps: usize,
}

impl Trajectory {
    pub fn integrate<R: MatrixRhs + ?Sized>(
        rhs: &R,
        anchor: f64,
        y0: DMatrix<f64>,
        lo: f64,
        hi: f64,
        tol: Tolerances,
    ) -> Result<Self> {
        Self::integrate_with_mode(rhs, anchor, y0, lo, hi, tol, DenseMode::Restep)
    }

    pub fn integrate_with_mode<R: MatrixRhs + ?Sized>(
        rhs: &R,
        anchor: f64,
        y0: DMatrix<f64>,
        lo: f64,
        hi: f64,
        tol: Tolerances,
        mode: DenseMode,
    ) -> Result<Self> {
        if !(lo <= anchor && anchor <= hi) {
            return Err(Error::input(format!(
                "span [{lo}, {hi}] does not contain anchor {anchor}"
            )));
        }
        let start = Node {
            t: anchor,
            y: y0,
            cont: None,
        };
        let mut traj = Trajectory {
            anchor,
            tol,
            mode,
            forward: vec![start.clone()],
            backward: vec![start],
            steps: 0,
        };
        traj.extend(rhs, lo, hi)?;
        Ok(traj)
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn span(&self) -> (f64, f64) {
        (
            self.backward.last().map(|n| n.t).unwrap_or(self.anchor),
            self.forward.last().map(|n| n.t).unwrap_or(self.anchor),
        )
    }

    pub fn tolerances(&self) -> Tolerances {
        self.tol
    }

    pub fn mode(&self) -> DenseMode {
        self.mode
    }

    /// Number of accepted steps.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Accepted grid times in increasing order.
    pub fn grid(&self) -> Vec<f64> {
        let mut g: Vec<f64> = self.backward.iter().rev().map(|n| n.t).collect();
        g.extend(self.forward.iter().skip(1).map(|n| n.t));
        g
    }

    /// Continues integration so the trajectory covers `[lo, hi]`.
    pub fn extend<R: MatrixRhs + ?Sized>(&mut self, rhs: &R, lo: f64, hi: f64) -> Result<()> {
        let (cur_lo, cur_hi) = self.span();
        if hi > cur_hi {
            let nodes = std::mem::take(&mut self.forward);
            self.forward = self.march(rhs, nodes, hi, 1.0)?;
        }
        if lo < cur_lo {
            let nodes = std::mem::take(&mut self.backward);
            self.backward = self.march(rhs, nodes, lo, -1.0)?;
        }
        Ok(())
    }

    fn march<R: MatrixRhs + ?Sized>(
        &mut self,
        rhs: &R,
        mut nodes: Vec<Node>,
        target: f64,
        dir: f64,
    ) -> Result<Vec<Node>> {
        let tol = self.tol;
        let last = nodes.last().expect("trajectory has a start node");
        let (mut t, mut y) = (last.t, last.y.clone());
        let h_max = (target - self.anchor).abs().max((target - t).abs());
        let mut f = rhs.eval(t, &y)?;
        let mut h = initial_step(rhs, t, &y, &f, dir, h_max, tol)?;
        let mut rejected_last = false;
        while dir * (target - t) > 0.0 {
            if self.steps >= MAX_STEPS {
                return Err(Error::Integration {
                    t,
                    reason: "step budget exhausted".into(),
                });
            }
            let remaining = (target - t).abs();
            if remaining <= 1e-14 * t.abs().max(1.0) && nodes.len() > 1 {
                // Rounding gap to the target; move the last node onto it.
                nodes.last_mut().expect("non-empty").t = target;
                break;
            }
            let mut hs = h.min(remaining);
            // Avoid a sliver of a final step.
            if remaining - hs < 1e-3 * hs {
                hs = remaining;
            }
            if hs < 1e-13 * t.abs().max(1.0) {
                return Err(Error::Integration {
                    t,
                    reason: format!("step size collapsed to {hs:.3e}"),
                });
            }
            let (y_new, err, st) = step_with_stages(rhs, t, &y, &f, dir * hs, Some(tol))?;
            let fac11 = err.powf(1.0 / 8.0);
            if err <= 1.0 {
                let t_new = if hs == remaining { target } else { t + dir * hs };
                let f_new = rhs.eval(t_new, &y_new)?;
                let cont = match self.mode {
                    DenseMode::Interpolant => Some(continuous_extension(
                        rhs,
                        t,
                        &y,
                        &y_new,
                        t_new - t,
                        &st,
                        &f_new,
                    )?),
                    DenseMode::Restep => None,
                };
                t = t_new;
                y = y_new;
                f = f_new;
                nodes.push(Node {
                    t,
                    y: y.clone(),
                    cont,
                });
                self.steps += 1;
                let fac = (fac11 / SAFE).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                let mut h_new = hs / fac;
                if rejected_last {
                    h_new = h_new.min(hs);
                }
                h = h_new.min(h_max);
                rejected_last = false;
            } else {
                h = hs / (fac11 / SAFE).min(1.0 / FAC_MIN);
                rejected_last = true;
            }
        }
        Ok(nodes)
    }

    /// State at `t`.
    pub fn eval<R: MatrixRhs + ?Sized>(&self, rhs: &R, t: f64) -> Result<DMatrix<f64>> {
        let (lo, hi) = self.span();
        let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        if t < lo - slack || t > hi + slack || !t.is_finite() {
            return Err(Error::OutsideSpan { t, lo, hi });
        }
        let (nodes, idx) = if t >= self.anchor {
            (&self.forward, self.forward.partition_point(|n| n.t <= t))
        } else {
            (&self.backward, self.backward.partition_point(|n| n.t >= t))
        };
        let node = &nodes[idx.saturating_sub(1)];
        let h = t - node.t;
        if h == 0.0 {
            return Ok(node.y.clone());
        }
        if self.mode == DenseMode::Interpolant {
            if let Some(next) = nodes.get(idx) {
                let cont = next.cont.as_ref().expect("interpolant stored for every step");
                return Ok(eval_extension(cont, h / (next.t - node.t)));
            }
        }
        let f = rhs.eval(node.t, &node.y)?;
        Ok(step(rhs, node.t, &node.y, &f, h, None)?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tableau_is_consistent() {
        let rows: [(f64, &[f64]); 11] = [
            (C2, &[A21]),
            (C3, &[A31, A32]),
            (C4, &[A41, A43]),
            (C5, &[A51, A53, A54]),
            (C6, &[A61, A64, A65]),
            (C7, &[A71, A74, A75, A76]),
            (C8, &[A81, A84, A85, A86, A87]),
            (C9, &[A91, A94, A95, A96, A97, A98]),
            (C10, &[A101, A104, A105, A106, A107, A108, A109]),
            (C11, &[A111, A114, A115, A116, A117, A118, A119, A1110]),
            (1.0, &[A121, A124, A125, A126, A127, A128, A129, A1210, A1211]),
        ];
        for (c, a) in rows {
            assert!((a.iter().sum::<f64>() - c).abs() < 1e-14, "row for c = {c}");
        }
        let b = B1 + B6 + B7 + B8 + B9 + B10 + B11 + B12;
        assert!((b - 1.0).abs() < 1e-14);
        let er = ER1 + ER6 + ER7 + ER8 + ER9 + ER10 + ER11 + ER12;
        assert!(er.abs() < 1e-14);
        assert!((BHH1 + BHH2 + BHH3 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn harmonic_oscillator_dense_output() {
        let rhs = |_t: f64, y: &DMatrix<f64>| -> Result<DMatrix<f64>> {
            Ok(DMatrix::from_column_slice(2, 1, &[y[1], -y[0]]))
        };
        let y0 = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let traj = Trajectory::integrate(&rhs, 0.0, y0, -3.0, 10.0, Tolerances::default()).unwrap();
        for &t in &[-2.9, -0.3, 0.0, 0.77, 3.3, 9.99, 10.0] {
            let y = traj.eval(&rhs, t).unwrap();
            assert!((y[0] - f64::sin(t)).abs() < 1e-10, "t = {t}");
            assert!((y[1] - f64::cos(t)).abs() < 1e-10, "t = {t}");
        }
        assert!(traj.eval(&rhs, 10.5).is_err());
    }

    #[test]
    fn interpolant_matches_restep() {
        let rhs = |_t: f64, y: &DMatrix<f64>| -> Result<DMatrix<f64>> {
            Ok(DMatrix::from_column_slice(2, 1, &[y[1], -4.0 * y[0]]))
        };
        let y0 = DMatrix::from_column_slice(2, 1, &[0.0, 2.0]);
        let tol = Tolerances::default();
        let a = Trajectory::integrate_with_mode(&rhs, 0.0, y0.clone(), -2.0, 7.0, tol, DenseMode::Interpolant)
            .unwrap();
        for i in 0..=90 {
            let t = -2.0 + 0.1 * i as f64 + 0.0137;
            let t = t.min(7.0);
            let y = a.eval(&rhs, t).unwrap();
            assert!((y[0] - (2.0 * t).sin()).abs() < 1e-9, "t = {t}");
            assert!((y[1] - 2.0 * (2.0 * t).cos()).abs() < 1e-9, "t = {t}");
        }
    }

    #[test]
    fn extension_continues_from_last_node() {
        let rhs = |_t: f64, y: &DMatrix<f64>| -> Result<DMatrix<f64>> { Ok(y.clone()) };
        let y0 = DMatrix::from_element(1, 1, 1.0);
        let mut traj = Trajectory::integrate(&rhs, 0.0, y0, 0.0, 1.0, Tolerances::default()).unwrap();
        traj.extend(&rhs, -1.0, 2.0).unwrap();
        assert_eq!(traj.span(), (-1.0, 2.0));
        let y = traj.eval(&rhs, 1.5).unwrap();
        assert!((y[0] - 1.5f64.exp()).abs() < 1e-9 * 1.5f64.exp());
    }

    #[test]
    fn blow_up_reports_time() {
        // y' = y^2 blows up at t = 1.
        let rhs = |_t: f64, y: &DMatrix<f64>| -> Result<DMatrix<f64>> { Ok(y.component_mul(y)) };
        let y0 = DMatrix::from_element(1, 1, 1.0);
        let err = Trajectory::integrate(&rhs, 0.0, y0, 0.0, 2.0, Tolerances::default()).unwrap_err();
        match err {
            Error::Integration { t, .. } => assert!(t > 0.9 && t <= 1.0 + 1e-6),
            other => panic!("unexpected {other:?}"),
        }
    }
}
