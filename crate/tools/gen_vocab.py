#!/usr/bin/env python3
"""Regenerates crates/core/assets/opcodes.tsv (value, mnemonic, delta, alpha, description)."""
import sys

BASE = [
    (0x00, "STOP", 0, 0, "Halts execution."),
    (0x01, "ADD", 2, 1, "Addition operation."),
    (0x02, "MUL", 2, 1, "Multiplication operation."),
    (0x03, "SUB", 2, 1, "Subtraction operation."),
    (0x04, "DIV", 2, 1, "Integer division operation. Division by zero yields zero."),
    (0x05, "SDIV", 2, 1, "Signed integer division operation, truncated toward zero. Operands are treated as two's complement signed values."),
    (0x06, "MOD", 2, 1, "Modulo remainder operation. A zero modulus yields zero."),
    (0x07, "SMOD", 2, 1, "Signed modulo remainder operation where the sign of the result follows the dividend."),
    (0x08, "ADDMOD", 3, 1, "Modulo addition operation. All intermediate calculations of this operation are not subject to the two to the power of two hundred fifty six modulo."),
    (0x09, "MULMOD", 3, 1, "Modulo multiplication operation. All intermediate calculations of this operation are not subject to the two to the power of two hundred fifty six modulo."),
    (0x0a, "EXP", 2, 1, "Exponential operation."),
    (0x0b, "SIGNEXTEND", 2, 1, "Extend length of two's complement signed integer."),
    (0x10, "LT", 2, 1, "Less-than comparison."),
    (0x11, "GT", 2, 1, "Greater-than comparison."),
    (0x12, "SLT", 2, 1, "Signed less-than comparison. Operands are treated as two's complement signed values."),
    (0x13, "SGT", 2, 1, "Signed greater-than comparison. Operands are treated as two's complement signed values."),
    (0x14, "EQ", 2, 1, "Equality comparison."),
    (0x15, "ISZERO", 1, 1, "Simple not operator. Pushes one if the item is zero and zero otherwise."),
    (0x16, "AND", 2, 1, "Bitwise AND operation."),
    (0x17, "OR", 2, 1, "Bitwise OR operation."),
    (0x18, "XOR", 2, 1, "Bitwise XOR operation."),
    (0x19, "NOT", 1, 1, "Bitwise NOT operation."),
    (0x1a, "BYTE", 2, 1, "Retrieve single byte from word. For the Nth byte, counting from the left, the most significant byte is index zero."),
    (0x1b, "SHL", 2, 1, "Left shift operation. The value is shifted left by the given number of bits."),
    (0x1c, "SHR", 2, 1, "Logical right shift operation. The value is shifted right by the given number of bits, filling with zero."),
    (0x1d, "SAR", 2, 1, "Arithmetic signed right shift operation. The value is shifted right, filling with the sign bit."),
    (0x20, "SHA3", 2, 1, "Compute Keccak-256 hash of a region of memory."),
    (0x30, "ADDRESS", 0, 1, "Get address of currently executing account."),
    (0x31, "BALANCE", 1, 1, "Get balance of the given account."),
    (0x32, "ORIGIN", 0, 1, "Get execution origination address. This is the sender of original transaction; it is never an account with non-empty associated code."),
    (0x33, "CALLER", 0, 1, "Get caller address. This is the address of the account that is directly responsible for this execution."),
    (0x34, "CALLVALUE", 0, 1, "Get deposited value by the instruction or transaction responsible for this execution."),
    (0x35, "CALLDATALOAD", 1, 1, "Get input data of current environment. This pertains to the input data passed with the message call instruction or transaction."),
    (0x36, "CALLDATASIZE", 0, 1, "Get size of input data in current environment. This pertains to the input data passed with the message call instruction or transaction."),
    (0x37, "CALLDATACOPY", 3, 0, "Copy input data in current environment to memory. This pertains to the input data passed with the message call instruction or transaction."),
    (0x38, "CODESIZE", 0, 1, "Get size of code running in current environment."),
    (0x39, "CODECOPY", 3, 0, "Copy code running in current environment to memory."),
    (0x3a, "GASPRICE", 0, 1, "Get price of gas in current environment. This is gas price specified by the originating transaction."),
    (0x3b, "EXTCODESIZE", 1, 1, "Get size of an account's code."),
    (0x3c, "EXTCODECOPY", 4, 0, "Copy an account's code to memory."),
    (0x3d, "RETURNDATASIZE", 0, 1, "Get size of output data from the previous call from the current environment."),
    (0x3e, "RETURNDATACOPY", 3, 0, "Copy output data from the previous call to memory."),
    (0x3f, "EXTCODEHASH", 1, 1, "Get hash of an account's code."),
    (0x40, "BLOCKHASH", 1, 1, "Get the hash of one of the 256 most recent complete blocks."),
    (0x41, "COINBASE", 0, 1, "Get the block's beneficiary address."),
    (0x42, "TIMESTAMP", 0, 1, "Get the block's timestamp."),
    (0x43, "NUMBER", 0, 1, "Get the block's number."),
    (0x44, "DIFFICULTY", 0, 1, "Get the block's difficulty."),
    (0x45, "GASLIMIT", 0, 1, "Get the block's gas limit."),
    (0x50, "POP", 1, 0, "Remove item from stack."),
    (0x51, "MLOAD", 1, 1, "Load word from memory."),
    (0x52, "MSTORE", 2, 0, "Save word to memory."),
    (0x53, "MSTORE8", 2, 0, "Save byte to memory."),
    (0x54, "SLOAD", 1, 1, "Load word from storage."),
    (0x55, "SSTORE", 2, 0, "Save word to storage."),
    (0x56, "JUMP", 1, 0, "Alter the program counter."),
    (0x57, "JUMPI", 2, 0, "Conditionally alter the program counter."),
    (0x58, "PC", 0, 1, "Get the value of the program counter prior to the increment corresponding to this instruction."),
    (0x59, "MSIZE", 0, 1, "Get the size of active memory in bytes."),
    (0x5a, "GAS", 0, 1, "Get the amount of available gas, including the corresponding reduction for the cost of this instruction."),
    (0x5b, "JUMPDEST", 0, 0, "Mark a valid destination for jumps. This operation has no effect on machine state during execution."),
]

WORDS = ["one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
         "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen",
         "eighteen", "nineteen", "twenty", "twenty-one", "twenty-two", "twenty-three",
         "twenty-four", "twenty-five", "twenty-six", "twenty-seven", "twenty-eight",
         "twenty-nine", "thirty", "thirty-one", "thirty-two"]
ORD = ["1st", "2nd", "3rd"] + [f"{i}th" for i in range(4, 18)]

TAIL = [
    (0xf0, "CREATE", 3, 1, "Create a new account with associated code."),
    (0xf1, "CALL", 7, 1, "Message-call into an account."),
    (0xf2, "CALLCODE", 7, 1, "Message-call into this account with an alternative account's code."),
    (0xf3, "RETURN", 2, 0, "Halt execution returning output data."),
    (0xf4, "DELEGATECALL", 6, 1, "Message-call into this account with an alternative account's code, but persisting the current values for sender and value."),
    (0xf5, "CREATE2", 4, 1, "Create a new account with associated code at a predictable address derived from a salt."),
    (0xfa, "STATICCALL", 6, 1, "Static message-call into an account. Disallows any modification of the state during the call."),
    (0xfd, "REVERT", 2, 0, "Halt execution reverting state changes but returning data and remaining gas."),
    (0xff, "SELFDESTRUCT", 1, 0, "Halt execution and register account for later deletion."),
]

def rows():
    out = list(BASE)
    for n in range(1, 33):
        item = "item" if n == 1 else "item"
        out.append((0x5f + n, f"PUSH{n}", 0, 1,
                    f"Place {WORDS[n-1]} byte {item} on stack. The bytes are read in line from the program code's bytes following this instruction."))
    for n in range(1, 17):
        out.append((0x7f + n, f"DUP{n}", n, n + 1, f"Duplicate {ORD[n-1]} stack item."))
    for n in range(1, 17):
        out.append((0x8f + n, f"SWAP{n}", n + 1, n + 1, f"Exchange 1st and {ORD[n]} stack items."))
    for n in range(0, 5):
        topics = "no topics" if n == 0 else f"{WORDS[n-1]} topic" + ("" if n == 1 else "s")
        out.append((0xa0 + n, f"LOG{n}", n + 2, 0, f"Append log record with {topics}."))
    out.extend(TAIL)
    return out

if __name__ == "__main__":
    r = rows()
    assert len(r) == 139, len(r)
    assert len({v for v, *_ in r}) == 139
    sys.stdout.write("value\tmnemonic\tdelta\talpha\tdescription\n")
    for v, m, d, a, desc in r:
        sys.stdout.write(f"0x{v:02x}\t{m}\t{d}\t{a}\t{desc}\n")
