method ArithmeticProgression(sequence: seq<int>) 
  returns (hasSamePattern: bool)
    requires |sequence| >= 3
{
    var diff := sequence[1] - sequence[0];
    hasSamePattern := (forall i :: 0 <= i < |sequence|-1 ==> 
        sequence[i+1] - sequence[i] == diff);
    return;
}
