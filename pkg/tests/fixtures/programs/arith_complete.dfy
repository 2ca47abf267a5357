function IsArithmeticSequence(sequence: seq<int>): bool
  requires |sequence| >= 2
  ensures IsArithmeticSequence(sequence) <==>
    forall i, j :: 0 <= i < j < |sequence|-1 ==> 
      (sequence[i+1] - sequence[i] == 
       sequence[j+1] - sequence[j])
{
  if |sequence| < 2 then false
  else
    var diff := sequence[1] - sequence[0];
    forall i :: 0 <= i < |sequence|-1 ==> 
        sequence[i+1] - sequence[i] == diff
}

function IsArithmeticProgression(
    sequence: seq<int>): bool
  requires |sequence| >= 3
  ensures IsArithmeticProgression(sequence) <==> 
    (|sequence| >= 3) && 
    IsArithmeticSequence(sequence)
{
  |sequence| >= 3 && IsArithmeticSequence(sequence)
}

method ArithmeticProgression(sequence: seq<int>) 
    returns (hasSamePattern: bool)
  requires |sequence| >= 3
  ensures hasSamePattern <==> 
    IsArithmeticProgression(sequence)
{
  var diff := sequence[1] - sequence[0];
  var i := 1;
  hasSamePattern := true;
  
  while i < |sequence| - 1
    invariant 1 <= i <= |sequence| - 1
    invariant hasSamePattern <==> 
      (forall k :: 0 <= k < i ==> 
        sequence[k+1] - sequence[k] == diff)
  {
    if sequence[i+1] - sequence[i] != diff {
      hasSamePattern := false;
      return;
    }
    i := i + 1;
  }
}
