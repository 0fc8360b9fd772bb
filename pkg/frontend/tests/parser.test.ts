/**
 * The browser parser must agree with the service to the byte: same
 * offsets (UTF-8, not code points), same expected-token sets, same
 * messages. The error vectors are frozen from the service's parser.
 */

import { describe, expect, it } from "vitest";

import errors from "./fixtures/errors.json";
import {
  parseScript,
  quoteText,
  ScriptSyntaxError,
  serializeAction,
  UnknownActionError,
} from "../src/scripts.js";

describe("script parsing", () => {
  it("reads quoted text with doubled-quote escapes", () => {
    const action = parseScript("NEW > 'note' < ['it''s fine']");
    expect(action.items).toEqual([{ kind: "literal", text: "it's fine" }]);
    expect(quoteText("it's fine")).toBe("'it''s fine'");
  });

  it("treats whitespace as insignificant between tokens", () => {
    const packed = parseScript("RENAME>'x'<['a']");
    const spread = parseScript("RENAME  >  'x'  <  [ 'a' ]");
    expect(serializeAction(packed)).toBe(serializeAction(spread));
  });

  it("keeps significant bytes inside quotes", () => {
    const action = parseScript("SELECT > 'd' < [' EmptyFrom']");
    expect(action.items).toEqual([{ kind: "field", name: " EmptyFrom" }]);
  });

  it("parses an empty item list", () => {
    const action = parseScript("UNITE > 'joined' < ' ; ' :: []");
    expect(action.items).toEqual([]);
    expect(action.sourceTerm).toBe(" ; ");
  });

  it("only pairs a value field with a date field when one follows", () => {
    const dated = parseScript("SELECT_NEWEST > 'l' < ['v' + 'd']");
    expect(dated.items).toEqual([
      { kind: "dated", valueField: "v", dateField: "d" },
    ]);
  });
});

describe("parse errors", () => {
  it.each(errors.filter((e) => e.error === "syntax"))(
    "reports $text at byte $offset",
    (entry) => {
      let caught: unknown;
      try {
        parseScript(entry.text);
      } catch (err) {
        caught = err;
      }
      expect(caught).toBeInstanceOf(ScriptSyntaxError);
      const err = caught as ScriptSyntaxError;
      expect(err.offset).toBe(entry.offset);
      expect([...err.expected]).toEqual(entry.expected);
      expect(err.message).toBe(entry.message);
    },
  );

  it("rejects unknown actions with the full action list", () => {
    const entry = errors.find((e) => e.error === "unknown-action")!;
    let caught: unknown;
    try {
      parseScript(entry.text);
    } catch (err) {
      caught = err;
    }
    expect(caught).toBeInstanceOf(UnknownActionError);
    const err = caught as UnknownActionError;
    expect(err.offset).toBe(entry.offset);
    expect(err.message).toBe(entry.message);
  });

  it("counts offsets in UTF-8 bytes, not characters", () => {
    // 'café' spans five bytes; the unterminated quote that follows
    // lands on byte 20 even though it is character 19.
    const text = "RENAME > 'café' < ['naïve";
    expect(new TextEncoder().encode(text).length).toBe(text.length + 2);
    try {
      parseScript(text);
      expect.unreachable("parse should fail");
    } catch (err) {
      expect((err as ScriptSyntaxError).offset).toBe(20);
    }
  });
});
