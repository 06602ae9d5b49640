//! Small reference designs shared by tests, examples, and the CLI.

/// One-bit full adder.
pub const FULL_ADDER: &str = "\
module full_adder(input a, input b, input cin, output sum, output cout);
  assign sum = a ^ b ^ cin;
  assign cout = (a & b) | (cin & (a ^ b));
endmodule
";

pub const INVERTER: &str = "module inv(input a, output b); assign b = ~a; endmodule\n";

/// A register-file datapath with `lanes` ALU lanes, for extraction-scale
/// tests. Each lane owns one register and mixes in its neighbors, so the
/// graph stays one connected component whatever the lane count.
pub fn synthetic_core(lanes: usize) -> String {
    use std::fmt::Write;
    let n = lanes.max(2);
    let mut s = String::new();
    s.push_str("module synth_core(input clk, input rst, input [31:0] instr, input [31:0] din,\n");
    s.push_str("                  output [31:0] dout, output valid);\n");
    s.push_str("  wire [4:0] op;\n  wire [4:0] rs;\n  assign op = instr[6:2];\n  assign rs = instr[19:15];\n");
    for i in 0..n {
        writeln!(s, "  reg [31:0] r{i};\n  wire [31:0] a{i};\n  wire [31:0] b{i};\n  wire [31:0] y{i};").unwrap();
    }
    for i in 0..n {
        let (p, q) = ((i + 1) % n, (i + 3) % n);
        let bit = i % 32;
        let code = i % 32;
        writeln!(s, "  assign a{i} = instr[{bit}] ? r{i} : (din ^ r{p});").unwrap();
        writeln!(s, "  assign b{i} = (rs == 5'd{code}) ? r{q} : {{r{p}[15:0], din[31:16]}};").unwrap();
        writeln!(
            s,
            "  assign y{i} = (op == 5'd{code}) ? (a{i} + b{i}) : ((a{i} & b{i}) | (a{i} >> 2));"
        )
        .unwrap();
        writeln!(s, "  always @(posedge clk) begin").unwrap();
        writeln!(s, "    if (rst) r{i} <= 32'h0;").unwrap();
        writeln!(s, "    else if (instr[{}]) r{i} <= y{i} ^ r{q};", (i + 7) % 32).unwrap();
        writeln!(s, "    else r{i} <= r{i} - b{i};").unwrap();
        writeln!(s, "  end").unwrap();
    }
    let xor: Vec<String> = (0..n).map(|i| format!("y{i}")).collect();
    writeln!(s, "  assign dout = {};", xor.join(" ^ ")).unwrap();
    writeln!(s, "  assign valid = |dout;").unwrap();
    s.push_str("endmodule\n");
    s
}
