use tscmpc::linalg::Mat;
use tscmpc::qp::{solve_qp, QpOutcome, QpProblem};

fn main() {
    // min x^2 s.t. x = 1 (equality), x <= 0: infeasible via eq-ineq conflict
    let qp = QpProblem {
        p: Mat::identity(1),
        q: vec![0.0],
        a: Mat::from_rows(&[vec![1.0], vec![1.0]]),
        l: vec![1.0, f64::NEG_INFINITY],
        u: vec![1.0, 0.0],
    };
    match solve_qp(&qp, 1e-8) {
        Ok(QpOutcome::Infeasible(_)) => println!("eq-ineq conflict: infeasible OK"),
        Ok(QpOutcome::Solved(s)) => println!("eq-ineq conflict: WRONGLY solved {:?}", s.x),
        Ok(QpOutcome::Unbounded) => println!("eq-ineq: unbounded?"),
        Err(e) => println!("eq-ineq conflict: {e}"),
    }
    // two-variable: y pinned by equality chain, box on y elsewhere
    let qp = QpProblem {
        p: Mat::identity(2),
        q: vec![0.0, 0.0],
        a: Mat::from_rows(&[vec![1.0, -1.0], vec![1.0, 0.0], vec![0.0, 1.0]]),
        l: vec![0.0, 2.0, f64::NEG_INFINITY],
        u: vec![0.0, 2.0, 1.0],
    };
    match solve_qp(&qp, 1e-8) {
        Ok(QpOutcome::Infeasible(_)) => println!("chain conflict: infeasible OK"),
        Ok(QpOutcome::Solved(s)) => println!("chain conflict: WRONGLY solved {:?}", s.x),
        Ok(QpOutcome::Unbounded) => println!("chain: unbounded?"),
        Err(e) => println!("chain conflict: {e}"),
    }
}
